"""
System model - configuration and Rayleigh fading channels
Конфигурация системы источник/получатель/перехватчик и генерация замираний
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from modules.errors import OutputError, ValidationError

logger = logging.getLogger(__name__)


class SchemeKind(str, Enum):
    """Схема передачи"""

    STT = "stt"
    SAS = "sas"
    OAS = "oas"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(f"unknown scheme '{value}', expected one of stt, sas, oas") from None


def db_to_linear(x_db):
    """x = 10^(x_dB / 10)"""
    x_db = _as_real(x_db, "dB value")
    try:
        return float(10.0 ** (x_db / 10.0))
    except OverflowError:
        raise ValidationError(f"{x_db} dB is out of floating-point range") from None


def linear_to_db(x):
    """x_dB = 10 log10 x"""
    if not x > 0:
        raise ValidationError(f"cannot convert nonpositive value {x} to dB")
    return float(10.0 * np.log10(x))


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """
    Параметры системы

    Attributes:
        m_tx: Число передающих антенн M
        n_dest: Число антенн получателя N_d
        n_eve: Число антенн перехватчика N_e
        sigma2_sd: Средний коэффициент передачи основного канала
        sigma2_se: Средний коэффициент передачи канала перехвата
        alpha_d: Множители основных линий, матрица M x N_d
        alpha_e: Множители линий перехвата, матрица M x N_e
        snr: Отношение сигнал/шум на передаче P / sigma_n^2 (линейное)
    """

    m_tx: int
    n_dest: int
    n_eve: int
    sigma2_sd: float = 1.0
    sigma2_se: float = 1.0
    alpha_d: np.ndarray = field(default=None)
    alpha_e: np.ndarray = field(default=None)
    snr: float = 1.0

    def __post_init__(self):
        # Значения по умолчанию: i.i.d. случай (все alpha = 1)
        if self.alpha_d is None and _positive_int(self.m_tx) and _positive_int(self.n_dest):
            object.__setattr__(self, "alpha_d", np.ones((self.m_tx, self.n_dest)))
        if self.alpha_e is None and _positive_int(self.m_tx) and _positive_int(self.n_eve):
            object.__setattr__(self, "alpha_e", np.ones((self.m_tx, self.n_eve)))
        if self.alpha_d is not None:
            object.__setattr__(self, "alpha_d", _frozen_matrix(self.alpha_d))
        if self.alpha_e is not None:
            object.__setattr__(self, "alpha_e", _frozen_matrix(self.alpha_e))

    @classmethod
    def iid(cls, m_tx, n_dest, n_eve, mer_db=0.0, snr_db=0.0):
        """Конфигурация с alpha = 1 и sigma2_se = 1"""
        config = cls(
            m_tx=m_tx,
            n_dest=n_dest,
            n_eve=n_eve,
            sigma2_sd=db_to_linear(mer_db),
            sigma2_se=1.0,
            snr=db_to_linear(snr_db),
        )
        validate(config)
        return config

    @classmethod
    def from_dict(cls, data):
        """
        Создание конфигурации из словаря сценария

        Args:
            data: Словарь с ключами M, N_d, N_e, mer_db, snr_db,
                  alpha_d, alpha_e (опционально), sigma2_sd и sigma2_se
                  (опционально, только вместе)

        Returns:
            SystemConfig: Проверенная конфигурация
        """
        if not isinstance(data, dict):
            raise ValidationError("scenario must be a mapping")
        if "system" in data and isinstance(data["system"], dict):
            data = data["system"]

        for key in ("M", "N_d", "N_e"):
            if key not in data:
                raise ValidationError(f"scenario is missing required key '{key}'")

        has_sd = "sigma2_sd" in data
        has_se = "sigma2_se" in data
        if has_sd != has_se:
            raise ValidationError("sigma2_sd and sigma2_se must be given together")

        if has_sd:
            sigma2_sd = _as_real(data["sigma2_sd"], "sigma2_sd")
            sigma2_se = _as_real(data["sigma2_se"], "sigma2_se")
        else:
            sigma2_se = 1.0
            sigma2_sd = db_to_linear(_as_real(data.get("mer_db", 0.0), "mer_db"))

        config = cls(
            m_tx=data["M"],
            n_dest=data["N_d"],
            n_eve=data["N_e"],
            sigma2_sd=sigma2_sd,
            sigma2_se=sigma2_se,
            alpha_d=data.get("alpha_d"),
            alpha_e=data.get("alpha_e"),
            snr=db_to_linear(_as_real(data.get("snr_db", 0.0), "snr_db")),
        )
        validate(config)
        return config

    def with_mer(self, mer_db):
        """Копия с новым MER при sigma2_se = 1"""
        return replace(self, sigma2_sd=db_to_linear(mer_db), sigma2_se=1.0)

    def with_snr(self, snr):
        return replace(self, snr=float(snr))

    def with_dims(self, m_tx=None, n_dest=None, n_eve=None):
        """Копия с новыми размерностями и i.i.d. множителями"""
        return replace(
            self,
            m_tx=self.m_tx if m_tx is None else m_tx,
            n_dest=self.n_dest if n_dest is None else n_dest,
            n_eve=self.n_eve if n_eve is None else n_eve,
            alpha_d=None,
            alpha_e=None,
        )

    def mer(self):
        return mer(self)

    def mer_db(self):
        return linear_to_db(mer(self))

    def summary(self):
        return (self.m_tx, self.n_dest, self.n_eve)

    def to_dict(self):
        """Словарь для манифеста"""
        return {
            "M": self.m_tx,
            "N_d": self.n_dest,
            "N_e": self.n_eve,
            "sigma2_sd": float(self.sigma2_sd),
            "sigma2_se": float(self.sigma2_se),
            "snr": float(self.snr),
            "alpha_d": self.alpha_d.tolist(),
            "alpha_e": self.alpha_e.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Одна реализация квадратов модулей коэффициентов |h_idj|^2, |h_iej|^2"""

    g_d: np.ndarray
    g_e: np.ndarray


def _as_real(value, what):
    if isinstance(value, bool):
        raise ValidationError(f"{what} must be a number, got {value!r}")
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} must be a number, got {value!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"{what} must be finite, got {value!r}")
    return value


def _positive_int(value):
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool) and value >= 1


def _frozen_matrix(value):
    try:
        matrix = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"alpha matrix must contain numbers, got {value!r}") from None
    matrix.setflags(write=False)
    return matrix


def validate(config):
    """
    Проверка инвариантов SystemConfig

    Raises:
        ValidationError: С описанием первого нарушенного условия
    """
    for name in ("m_tx", "n_dest", "n_eve"):
        if not _positive_int(getattr(config, name)):
            raise ValidationError(f"{name} must be ≥ 1 (got {getattr(config, name)!r})")

    for name in ("sigma2_sd", "sigma2_se", "snr"):
        value = getattr(config, name)
        if not (np.isfinite(value) and value > 0):
            raise ValidationError(f"{name} must be positive (got {value!r})")

    expected = {
        "alpha_d": (config.m_tx, config.n_dest),
        "alpha_e": (config.m_tx, config.n_eve),
    }
    for name, shape in expected.items():
        matrix = getattr(config, name)
        if matrix is None or matrix.shape != shape:
            got = None if matrix is None else matrix.shape
            raise ValidationError(f"{name} shape must be {shape}, got {got}")
        if not (np.all(np.isfinite(matrix)) and np.all(matrix > 0)):
            raise ValidationError(f"{name} entries must be positive")


def mer(config):
    """MER: lambda_de = sigma2_sd / sigma2_se"""
    return float(config.sigma2_sd / config.sigma2_se)


def is_iid(config):
    """True, если все множители alpha равны 1"""
    return bool(np.all(config.alpha_d == 1.0) and np.all(config.alpha_e == 1.0))


def sample_realizations(config, rng, size, complex_gaussian=False):
    """
    Пакет реализаций релеевских замираний

    Args:
        config: SystemConfig
        rng: numpy.random.Generator
        size: Число реализаций
        complex_gaussian: Отладочный путь через комплексные гауссовы h

    Returns:
        tuple: (g_d формы (size, M, N_d), g_e формы (size, M, N_e))
    """
    mean_d = config.alpha_d * config.sigma2_sd
    mean_e = config.alpha_e * config.sigma2_se

    if complex_gaussian:
        return _complex_gaussian_gains(rng, mean_d, size), _complex_gaussian_gains(rng, mean_e, size)

    g_d = rng.exponential(scale=mean_d, size=(size,) + mean_d.shape)
    g_e = rng.exponential(scale=mean_e, size=(size,) + mean_e.shape)
    return g_d, g_e


def _complex_gaussian_gains(rng, mean, size):
    # h ~ CN(0, sigma^2): Re, Im ~ N(0, sigma^2 / 2)
    std = np.sqrt(mean / 2.0)
    shape = (size,) + mean.shape
    h = rng.normal(0.0, std, size=shape) + 1j * rng.normal(0.0, std, size=shape)
    return np.abs(h) ** 2


def sample_realization(config, rng, complex_gaussian=False):
    """Одна реализация канала"""
    g_d, g_e = sample_realizations(config, rng, 1, complex_gaussian=complex_gaussian)
    return ChannelRealization(g_d=g_d[0], g_e=g_e[0])


def load_scenario(path):
    """
    Загрузка сценария из YAML файла

    Args:
        path: Путь к файлу сценария

    Returns:
        SystemConfig
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise OutputError(f"cannot read scenario file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ValidationError(f"scenario file {path} is not valid YAML: {e}") from e

    config = SystemConfig.from_dict(data or {})
    logger.info(f"Сценарий загружен: {path} (M={config.m_tx}, N_d={config.n_dest}, N_e={config.n_eve})")
    return config
