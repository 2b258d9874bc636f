"""
Analytic engine - probability of zero secrecy capacity
Замкнутые формы, квадратуры, порядковые статистики и асимптотические границы
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from modules.errors import CapacityError, NumericalError, ValidationError
from modules.model import SchemeKind
from modules.numerics import (
    DEFAULT_MAX_PANELS,
    DEFAULT_REL_TOL,
    integrate_semi_infinite,
    log_binomial,
    regularized_lower_gamma,
    regularized_upper_gamma,
    signed_logsum_arrays,
)

logger = logging.getLogger(__name__)

DEFAULT_SUBSET_CAP = 20
DEFAULT_CLAMP_TOL = 1e-12

# Предел отношения sum|слагаемых| / |сумма| для знакопеременных сумм
_LOG_CANCELLATION_LIMIT = math.log(1e6)


@dataclass(frozen=True)
class AsymptoticBoundPair:
    """
    Асимптотические границы вида c * lambda^(-M*N_d)

    Коэффициенты хранятся и в логарифмах, чтобы большие M*N_d
    не переполняли float при вычислении границ.
    """

    lower_coeff: float
    upper_coeff: float
    exponent: int
    log_lower: float
    log_upper: float

    def lower(self, lam):
        return math.exp(self.log_lower - self.exponent * math.log(lam))

    def upper(self, lam):
        return math.exp(self.log_upper - self.exponent * math.log(lam))

    def brackets(self, p, lam, rtol=0.0):
        """
        Проверка lower(lam) <= p <= upper(lam) с относительным допуском

        Границы получены линеаризацией 1 - exp(-z) ~ z и верны с точностью
        O(1/lambda), отсюда rtol.
        """
        return self.lower(lam) * (1.0 - rtol) <= p <= self.upper(lam) * (1.0 + rtol)


def _check_dims(m_tx, n_dest, n_eve):
    for name, value in (("m_tx", m_tx), ("n_dest", n_dest), ("n_eve", n_eve)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ValidationError(f"{name} must be ≥ 1 (got {value!r})")


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise ValidationError(f"MER lambda must be positive, got {lam!r}")


def _as_probability(value, clamp_tol=DEFAULT_CLAMP_TOL, what="probability"):
    """Прижатие к [0, 1] только в пределах clamp_tol, иначе NumericalError"""
    if math.isnan(value):
        raise NumericalError(f"{what} evaluated to NaN")
    if value < 0.0:
        if value < -clamp_tol:
            raise NumericalError(f"{what} = {value:.3e} is below 0 beyond tolerance {clamp_tol}")
        return 0.0
    if value > 1.0:
        if value > 1.0 + clamp_tol:
            raise NumericalError(f"{what} = {value:.15g} exceeds 1 beyond tolerance {clamp_tol}")
        return 1.0
    return value


def _log_partial_binomial_sum(total, count, lam):
    """ln sum_{k=0}^{count-1} C(total, k) lam^k"""
    k = np.arange(count)
    logs = np.array([log_binomial(total, int(i)) for i in k]) + k * math.log(lam)
    return signed_logsum_arrays(np.ones(count), logs).log_mag


def p_zero_stt(m_tx, n_dest, n_eve, lam, clamp_tol=DEFAULT_CLAMP_TOL):
    """
    Вероятность нулевой секретной ёмкости схемы STT (замкнутая форма)

    Args:
        m_tx, n_dest, n_eve: Числа антенн M, N_d, N_e
        lam: MER (линейный)

    Returns:
        float: Вероятность в (0, 1)
    """
    _check_dims(m_tx, n_dest, n_eve)
    _check_lambda(lam)
    main = m_tx * n_dest
    wiretap = m_tx * n_eve
    log_p = (1 - main - wiretap) * math.log1p(lam) + _log_partial_binomial_sum(
        main + wiretap - 1, wiretap, lam
    )
    return _as_probability(math.exp(log_p), clamp_tol, "p_zero_stt")


def p_zero_oas(m_tx, n_dest, n_eve, lam, clamp_tol=DEFAULT_CLAMP_TOL):
    """
    Вероятность нулевой секретной ёмкости схемы OAS

    Произведение по антеннам одноантенных вероятностей STT.
    """
    _check_dims(m_tx, n_dest, n_eve)
    _check_lambda(lam)
    log_single = (1 - n_dest - n_eve) * math.log1p(lam) + _log_partial_binomial_sum(
        n_dest + n_eve - 1, n_eve, lam
    )
    return _as_probability(math.exp(m_tx * log_single), clamp_tol, "p_zero_oas")


def p_zero_sas(m_tx, n_dest, n_eve, lam, rel_tol=DEFAULT_REL_TOL, max_panels=DEFAULT_MAX_PANELS,
               clamp_tol=DEFAULT_CLAMP_TOL):
    """
    Вероятность нулевой секретной ёмкости схемы SAS (квадратура)

    Pr{max_i Gamma_i(N_d, lam) < Gamma(N_e, 1)} =
        int_0^inf P(N_d, x/lam)^M * f_{Gamma(N_e)}(x) dx

    Args:
        m_tx, n_dest, n_eve: Числа антенн
        lam: MER (линейный)
        rel_tol: Относительная точность квадратуры

    Returns:
        float: Вероятность
    """
    _check_dims(m_tx, n_dest, n_eve)
    _check_lambda(lam)

    def integrand(x):
        p = regularized_lower_gamma(n_dest, x / lam)
        if p > 0.5:
            # P^M = (1 - Q)^M без потери точности при P -> 1
            p_max = math.exp(m_tx * math.log1p(-regularized_upper_gamma(n_dest, x / lam)))
        else:
            p_max = p ** m_tx
        return p_max * stats.gamma.pdf(x, n_eve)

    value = integrate_semi_infinite(integrand, rel_tol=rel_tol, max_panels=max_panels)
    logger.debug(f"p_zero_sas(M={m_tx}, N_d={n_dest}, N_e={n_eve}, lam={lam:.6g}) = {value:.12g}")
    return _as_probability(value, clamp_tol, "p_zero_sas")


def p_zero_sas_binomial(m_tx, n_eve, lam):
    """
    Замкнутая форма SAS при N_d = 1

    sum_k C(M, k) (-1)^k (1 + k/lam)^(-N_e)
    """
    _check_dims(m_tx, 1, n_eve)
    _check_lambda(lam)
    k = np.arange(m_tx + 1)
    signs = np.where(k % 2 == 0, 1.0, -1.0)
    logs = np.array([log_binomial(m_tx, int(i)) for i in k]) - n_eve * np.log1p(k / lam)
    return _as_probability(signed_logsum_arrays(signs, logs).to_float(), what="p_zero_sas_binomial")


def p_zero(scheme, m_tx, n_dest, n_eve, lam, rel_tol=DEFAULT_REL_TOL, max_panels=DEFAULT_MAX_PANELS,
           clamp_tol=DEFAULT_CLAMP_TOL):
    """Диспетчер аналитических вероятностей по схеме"""
    scheme = SchemeKind.parse(scheme)
    if scheme is SchemeKind.STT:
        return p_zero_stt(m_tx, n_dest, n_eve, lam, clamp_tol=clamp_tol)
    if scheme is SchemeKind.OAS:
        return p_zero_oas(m_tx, n_dest, n_eve, lam, clamp_tol=clamp_tol)
    return p_zero_sas(m_tx, n_dest, n_eve, lam, rel_tol=rel_tol, max_panels=max_panels, clamp_tol=clamp_tol)


# --- Максимум независимых экспоненциальных величин ---

def _subset_sums(rates, subset_cap):
    """
    Суммы интенсивностей и мощности всех непустых подмножеств

    Returns:
        tuple: (sums, sizes), массивы длины 2^n - 1
    """
    rates = np.asarray(rates, dtype=float).ravel()
    n = rates.size
    if n == 0:
        raise ValidationError("at least one exponential mean is required")
    if n > subset_cap:
        raise CapacityError(
            f"{n} elements exceed the subset-enumeration cap {subset_cap}; "
            "use the i.i.d. (grouped by cardinality) path for equal means"
        )

    sums = np.zeros(1 << n)
    sizes = np.zeros(1 << n, dtype=int)
    for i, rate in enumerate(rates):
        width = 1 << i
        sums[width:2 * width] = sums[:width] + rate
        sizes[width:2 * width] = sizes[:width] + 1
    return sums[1:], sizes[1:]


def _check_means(means):
    means = np.asarray(means, dtype=float).ravel()
    if means.size == 0:
        raise ValidationError("at least one exponential mean is required")
    if not np.all(means > 0):
        raise ValidationError("exponential means must be positive")
    return means


def max_exp_cdf(means, x, subset_cap=DEFAULT_SUBSET_CAP, clamp_tol=DEFAULT_CLAMP_TOL):
    """
    CDF максимума независимых экспоненциальных величин (включения-исключения)

    Args:
        means: Средние значения
        x: Аргумент

    Returns:
        float: Pr{max <= x}
    """
    means = _check_means(means)
    if x <= 0:
        return 0.0
    sums, sizes = _subset_sums(1.0 / means, subset_cap)
    signs = np.concatenate(([1.0], np.where(sizes % 2 == 0, 1.0, -1.0)))
    logs = np.concatenate(([0.0], -x * sums))
    total = signed_logsum_arrays(signs, logs)

    if _cancelled(total, logs):
        logger.debug(f"max_exp_cdf: сокращение при x={x:.3e}, переход к произведению")
        return _as_probability(_max_exp_cdf_product(means, x), clamp_tol, "max_exp_cdf")
    return _as_probability(total.to_float(), clamp_tol, "max_exp_cdf")


def max_exp_pdf(means, x, subset_cap=DEFAULT_SUBSET_CAP):
    """PDF максимума независимых экспоненциальных величин"""
    means = _check_means(means)
    if x < 0:
        raise ValidationError(f"max_exp_pdf needs x >= 0, got {x}")
    sums, sizes = _subset_sums(1.0 / means, subset_cap)
    signs = np.where(sizes % 2 == 1, 1.0, -1.0)
    logs = np.log(sums) - x * sums
    total = signed_logsum_arrays(signs, logs)

    if _cancelled(total, logs):
        logger.debug(f"max_exp_pdf: сокращение при x={x:.3e}, переход к произведению")
        return _max_exp_pdf_product(1.0 / means, x)
    return total.to_float()


def _cancelled(total, logs):
    """Сумма неположительна или sum|слагаемых| / |сумма| больше 1e6"""
    if total.sign <= 0:
        return True
    log_abs = signed_logsum_arrays(np.ones(len(logs)), logs).log_mag
    return log_abs - total.log_mag > _LOG_CANCELLATION_LIMIT


def _max_exp_cdf_product(means, x):
    """prod_k (1 - e^(-x/mean_k))"""
    if np.all(means == means[0]):
        return max_exp_cdf_iid(means.size, float(means[0]), x)
    with np.errstate(divide="ignore"):
        return float(np.exp(np.log(-np.expm1(-x / means)).sum()))


def _max_exp_pdf_product(rates, x):
    """sum_a rate_a e^(-rate_a x) prod_{b != a} (1 - e^(-rate_b x)), все слагаемые положительны"""
    if np.all(rates == rates[0]):
        return max_exp_pdf_iid(rates.size, 1.0 / float(rates[0]), x)
    with np.errstate(divide="ignore"):
        log_cdf = np.log(-np.expm1(-rates * x))
    logs = [
        math.log(rate) - rate * x + log_cdf[:a].sum() + log_cdf[a + 1:].sum()
        for a, rate in enumerate(rates)
    ]
    return float(np.exp(logs).sum())


def max_exp_cdf_iid(count, mean, x):
    """CDF максимума count одинаковых экспоненциальных величин: (1 - e^(-x/mean))^count"""
    if count < 1 or not mean > 0:
        raise ValidationError("count must be ≥ 1 and mean positive")
    if x <= 0:
        return 0.0
    return float((-math.expm1(-x / mean)) ** count)


def max_exp_pdf_iid(count, mean, x):
    """PDF максимума count одинаковых экспоненциальных величин"""
    if count < 1 or not mean > 0:
        raise ValidationError("count must be ≥ 1 and mean positive")
    if x < 0:
        raise ValidationError(f"max_exp_pdf needs x >= 0, got {x}")
    tail = math.exp(-x / mean)
    return float(count / mean * (-math.expm1(-x / mean)) ** (count - 1) * tail)


def _alternating_power_sum(rates, power, subset_cap, grouped=True):
    """
    sum_A (-1)^(|A|+1) (sum_{a in A} rate_a)^(-power) по непустым подмножествам

    Равняется E[X^power] / power! для X - максимума экспоненциальных величин
    с интенсивностями rates. При равных интенсивностях подмножества
    группируются по мощности (n слагаемых вместо 2^n - 1). Если сумма
    теряет точность на сокращении, момент считается квадратурой.

    Returns:
        float: Логарифм суммы (сумма положительна)
    """
    rates = np.asarray(rates, dtype=float).ravel()
    if grouped and np.all(rates == rates[0]):
        n = rates.size
        k = np.arange(1, n + 1)
        signs = np.where(k % 2 == 1, 1.0, -1.0)
        logs = np.array([log_binomial(n, int(i)) for i in k]) - power * np.log(k * rates[0])
    else:
        sums, sizes = _subset_sums(rates, subset_cap)
        signs = np.where(sizes % 2 == 1, 1.0, -1.0)
        logs = -power * np.log(sums)

    total = signed_logsum_arrays(signs, logs)
    if _cancelled(total, logs):
        logger.debug(f"Знакопеременная сумма ({rates.size} интенсивностей, степень {power}): квадратура")
        return _log_max_exp_moment(rates, power)
    return total.log_mag


def _log_max_exp_moment(rates, power):
    """
    ln(E[X^power] / power!) квадратурой с положительным интегрантом

    x^power / power! * f_max(x), f_max - плотность максимума
    """
    log_norm = float(special.gammaln(power + 1))

    def integrand(x):
        if x <= 0.0:
            return 0.0
        density = _max_exp_pdf_product(rates, x)
        if density <= 0.0:
            return 0.0
        return math.exp(power * math.log(x) - log_norm + math.log(density))

    value = integrate_semi_infinite(integrand, scale=1.0 / float(rates.max()))
    if not value > 0.0:
        raise NumericalError(f"moment quadrature returned {value!r}")
    return math.log(value)


def expected_max_exp(means, subset_cap=DEFAULT_SUBSET_CAP):
    """Среднее максимума независимых экспоненциальных величин"""
    means = _check_means(means)
    return math.exp(_alternating_power_sum(1.0 / means, 1, subset_cap))


# --- Асимптотические границы ---

def _bound_pair(log_lower, log_upper, exponent):
    if log_lower > log_upper + 1e-12:
        raise NumericalError(
            f"asymptotic lower coefficient exceeds upper (ln {log_lower:.6g} > ln {log_upper:.6g})"
        )
    with np.errstate(over="ignore"):
        lower = float(np.exp(log_lower))
        upper = float(np.exp(log_upper))
    return AsymptoticBoundPair(lower, upper, exponent, log_lower, log_upper)


def stt_bounds_asymptotic(config, subset_cap=DEFAULT_SUBSET_CAP, grouped=True):
    """
    Асимптотические нижняя и верхняя границы для STT

    Нижняя: MN_d * max|h_d|^2 < max|h_e|^2, верхняя: max|h_d|^2 < MN_e * max|h_e|^2;
    подмножества берутся по всем MN_e линиям перехвата.
    """
    n = config.m_tx * config.n_dest
    wiretap = config.m_tx * config.n_eve
    rates_e = 1.0 / config.alpha_e
    common = special.gammaln(n + 1) - np.log(config.alpha_d).sum()

    log_lower = common + _alternating_power_sum(n * rates_e, n, subset_cap, grouped)
    log_upper = common + n * math.log(wiretap) + _alternating_power_sum(rates_e, n, subset_cap, grouped)
    return _bound_pair(float(log_lower), float(log_upper), n)


def oas_bounds_asymptotic(config, subset_cap=DEFAULT_SUBSET_CAP, grouped=True):
    """
    Асимптотические границы для OAS: произведение по антеннам

    Для антенны i подмножества берутся по N_e антеннам перехватчика.
    """
    nd = config.n_dest
    ne = config.n_eve
    log_lower = 0.0
    log_upper = 0.0
    for i in range(config.m_tx):
        rates_e = 1.0 / config.alpha_e[i]
        common = special.gammaln(nd + 1) - np.log(config.alpha_d[i]).sum()
        log_lower += common + _alternating_power_sum(nd * rates_e, nd, subset_cap, grouped)
        log_upper += common + nd * math.log(ne) + _alternating_power_sum(rates_e, nd, subset_cap, grouped)
    return _bound_pair(float(log_lower), float(log_upper), config.m_tx * nd)


def sas_bounds_asymptotic(config, subset_cap=DEFAULT_SUBSET_CAP, grouped=True, reference_antenna=0):
    """
    Асимптотические границы для SAS

    Суммы по подмножествам антенн перехватчика используют строку alpha_e
    опорной антенны m (при i.i.d. перехвате выбор m не важен).
    """
    if not 0 <= reference_antenna < config.m_tx:
        raise ValidationError(f"reference antenna {reference_antenna} out of range")
    n = config.m_tx * config.n_dest
    rates_e = 1.0 / config.alpha_e[reference_antenna]
    common = special.gammaln(n + 1) - np.log(config.alpha_d).sum()

    log_lower = common + _alternating_power_sum(config.n_dest * rates_e, n, subset_cap, grouped)
    log_upper = common + n * math.log(config.n_eve) + _alternating_power_sum(rates_e, n, subset_cap, grouped)
    return _bound_pair(float(log_lower), float(log_upper), n)


def bounds(scheme, config, subset_cap=DEFAULT_SUBSET_CAP):
    """Диспетчер асимптотических границ по схеме"""
    scheme = SchemeKind.parse(scheme)
    if scheme is SchemeKind.STT:
        return stt_bounds_asymptotic(config, subset_cap)
    if scheme is SchemeKind.OAS:
        return oas_bounds_asymptotic(config, subset_cap)
    return sas_bounds_asymptotic(config, subset_cap)


# --- Моменты для теоремы о линеаризации ---

def theorem1_moments(config, i, j, subset_cap=DEFAULT_SUBSET_CAP):
    """
    Моменты z = X_e / (M N_d sigma2_idj), X_e - максимум по всем MN_e линиям перехвата

    Args:
        config: SystemConfig
        i: Индекс передающей антенны
        j: Индекс антенны получателя

    Returns:
        tuple: (E(z), E(z^2)), убывают как 1/lambda и 1/lambda^2
    """
    if not (0 <= i < config.m_tx and 0 <= j < config.n_dest):
        raise ValidationError(f"indices ({i}, {j}) out of range for M={config.m_tx}, N_d={config.n_dest}")

    means_e = config.alpha_e * config.sigma2_se
    scale = config.m_tx * config.n_dest * config.alpha_d[i, j] * config.sigma2_sd

    # E[X^k] = k! * sum_A (-1)^(|A|+1) S_A^(-k)
    first = expected_max_exp(means_e, subset_cap)
    second = 2.0 * math.exp(_alternating_power_sum(1.0 / means_e.ravel(), 2, subset_cap))
    return first / scale, second / scale ** 2


def sample_theorem1_z(config, i, j, n_samples, seed):
    """Выборка z методом Монте-Карло (для сверки с theorem1_moments)"""
    rng = np.random.default_rng(seed)
    mean_e = config.alpha_e * config.sigma2_se
    draws = rng.exponential(scale=mean_e, size=(n_samples,) + mean_e.shape)
    x_e = draws.reshape(n_samples, -1).max(axis=1)
    return x_e / (config.m_tx * config.n_dest * config.alpha_d[i, j] * config.sigma2_sd)
