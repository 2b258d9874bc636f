"""
Numerical primitives
Специальные функции и численные примитивы для аналитического движка
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from modules.errors import QuadratureError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-9
DEFAULT_MAX_PANELS = 64

# Ниже этого порога log C(n, k) считается прямой суммой логарифмов
_DIRECT_BINOMIAL_TERMS = 64


@dataclass(frozen=True)
class SignedLogValue:
    """Число в виде (знак, ln|x|); sign = 0 означает точный ноль"""

    sign: int
    log_mag: float = 0.0

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValidationError(f"sign must be -1, 0 or +1, got {self.sign}")
        if self.sign != 0 and math.isnan(self.log_mag):
            raise ValidationError("log_mag is NaN")

    @classmethod
    def zero(cls):
        return cls(0, 0.0)

    @classmethod
    def from_float(cls, value):
        """Перевод вещественного числа в знаково-логарифмическую форму"""
        if math.isnan(value):
            raise ValidationError("cannot represent NaN as SignedLogValue")
        if value == 0.0:
            return cls.zero()
        return cls(1 if value > 0 else -1, math.log(abs(value)))

    def to_float(self):
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_mag)

    def is_zero(self):
        return self.sign == 0


def log_binomial(n, k):
    """
    Натуральный логарифм биномиального коэффициента C(n, k)

    Args:
        n: Неотрицательное целое
        k: Целое в диапазоне 0..n

    Returns:
        float: ln C(n, k)
    """
    if n < 0 or k < 0:
        raise ValidationError(f"log_binomial needs nonnegative arguments, got n={n}, k={k}")
    if k > n:
        raise ValidationError(f"log_binomial needs k <= n, got n={n}, k={k}")

    k = min(k, n - k)
    if k == 0:
        return 0.0

    if k <= _DIRECT_BINOMIAL_TERMS:
        # ln C(n,k) = sum ln((n-k+i)/i); без вычитания больших lgamma
        i = np.arange(1, k + 1, dtype=float)
        return math.fsum(np.log1p((n - k) / i))

    return float(special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1))


def regularized_lower_gamma(a, x):
    """
    Регуляризованная нижняя неполная гамма-функция P(a, x)

    Args:
        a: Параметр формы, a > 0
        x: Аргумент, x >= 0

    Returns:
        float: P(a, x) в [0, 1]
    """
    if not a > 0:
        raise ValidationError(f"regularized_lower_gamma needs a > 0, got {a}")
    if x < 0:
        raise ValidationError(f"regularized_lower_gamma needs x >= 0, got {x}")
    return float(special.gammainc(a, x))


def regularized_upper_gamma(a, x):
    """Q(a, x) = 1 - P(a, x)"""
    if not a > 0:
        raise ValidationError(f"regularized_upper_gamma needs a > 0, got {a}")
    if x < 0:
        raise ValidationError(f"regularized_upper_gamma needs x >= 0, got {x}")
    return float(special.gammaincc(a, x))


def signed_logsum(terms):
    """
    Сумма знаково-логарифмических слагаемых

    Максимальный модуль выносится за скобки, масштабированные слагаемые
    суммируются с точным округлением (math.fsum), поэтому результат не
    зависит от порядка слагаемых.

    Args:
        terms: Последовательность SignedLogValue

    Returns:
        SignedLogValue: Сумма
    """
    terms = list(terms)
    return signed_logsum_arrays([t.sign for t in terms], [t.log_mag for t in terms])


def signed_logsum_arrays(signs, logs):
    """Векторный вариант signed_logsum для массивов знаков и логарифмов"""
    signs = np.asarray(signs, dtype=float)
    logs = np.asarray(logs, dtype=float)
    mask = signs != 0
    if not mask.any():
        return SignedLogValue.zero()
    signs, logs = signs[mask], logs[mask]
    if np.isnan(logs).any():
        raise ValidationError("signed_logsum got NaN log_mag")

    peak = logs.max()
    if peak == math.inf:
        raise ValidationError("signed_logsum got infinite log_mag")
    if peak == -math.inf:
        return SignedLogValue.zero()

    total = math.fsum(signs * np.exp(logs - peak))
    if total == 0.0:
        return SignedLogValue.zero()
    return SignedLogValue(1 if total > 0 else -1, float(peak + math.log(abs(total))))


def integrate_semi_infinite(f, rel_tol=DEFAULT_REL_TOL, max_panels=DEFAULT_MAX_PANELS, scale=1.0):
    """
    Интеграл неотрицательной функции по [0, inf)

    Полуось режется на панели удваивающейся ширины, каждая панель
    интегрируется адаптивной квадратурой QUADPACK. Обход останавливается,
    когда вклад очередней панели меньше rel_tol/10 от накопленной суммы:
    для экспоненциально убывающего интегранда остаток хвоста ещё меньше.

    Args:
        f: Подынтегральная функция (скалярная)
        rel_tol: Относительная точность, 0 < rel_tol <= 1e-3
        max_panels: Бюджет панелей
        scale: Ширина первой панели

    Returns:
        float: Значение интеграла
    """
    if not 0 < rel_tol <= 1e-3:
        raise ValidationError(f"rel_tol must be in (0, 1e-3], got {rel_tol}")
    if not scale > 0:
        raise ValidationError(f"scale must be positive, got {scale}")

    tail_tol = rel_tol / 10.0
    total = 0.0
    abserr_total = 0.0
    left = 0.0
    width = float(scale)
    contribution = float("nan")

    for panel in range(max_panels):
        right = left + width
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                contribution, abserr = integrate.quad(
                    f, left, right, epsabs=0.0, epsrel=tail_tol, limit=200
                )
            except integrate.IntegrationWarning as e:
                raise QuadratureError(
                    "panel quadrature did not converge",
                    {"panel": panel, "left": left, "right": right, "reason": str(e).splitlines()[0]},
                ) from e

        total += contribution
        abserr_total += abserr
        logger.debug(f"Панель {panel}: [{left:.4g}, {right:.4g}] вклад {contribution:.6e}")

        if total > 0 and contribution <= tail_tol * total:
            if abserr_total > rel_tol * total:
                raise QuadratureError(
                    "accumulated error exceeds tolerance",
                    {"panels": panel + 1, "total": total, "abserr": abserr_total},
                )
            return total

        left = right
        width *= 2.0

    raise QuadratureError(
        "semi-infinite quadrature did not converge",
        {"panels": max_panels, "total": total, "last_contribution": contribution, "right": left},
    )
