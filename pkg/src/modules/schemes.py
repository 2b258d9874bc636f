"""
Transmission schemes - STT, OAS, SAS
Скорости передачи, правила выбора антенны и событие нулевой секретной ёмкости
"""

import logging
from dataclasses import dataclass

import numpy as np

from modules.errors import ValidationError
from modules.model import SchemeKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RatePair:
    """Скорости (бит/с/Гц) к получателю и к перехватчику"""

    r_main: float
    r_wiretap: float


def secrecy_capacity(rates):
    """Секретная ёмкость: max(0, R_main - R_wiretap)"""
    return max(0.0, rates.r_main - rates.r_wiretap)


def stt_rates(config, real):
    """
    Скорости пространственно-временной передачи (все M антенн, мощность P/M)

    Args:
        config: SystemConfig
        real: ChannelRealization

    Returns:
        RatePair
    """
    gain = config.snr / config.m_tx
    r_main = np.log2(1.0 + gain * real.g_d.sum())
    r_wiretap = np.log2(1.0 + gain * real.g_e.sum())
    return RatePair(float(r_main), float(r_wiretap))


def per_antenna_rates(config, real, i):
    """
    Скорости при передаче с антенны i и MRC на приёме

    Args:
        config: SystemConfig
        real: ChannelRealization
        i: Индекс передающей антенны

    Returns:
        RatePair
    """
    if not 0 <= i < config.m_tx:
        raise ValidationError(f"antenna index {i} out of range 0..{config.m_tx - 1}")
    r_main = np.log2(1.0 + config.snr * real.g_d[i].sum())
    r_wiretap = np.log2(1.0 + config.snr * real.g_e[i].sum())
    return RatePair(float(r_main), float(r_wiretap))


def oas_select(config, real):
    """
    Оптимальный выбор антенны по отношению (1 + snr*main) / (1 + snr*eve)

    np.argmax возвращает первый максимум, т.е. наименьший индекс при равенстве.
    """
    ratio = (1.0 + config.snr * real.g_d.sum(axis=1)) / (1.0 + config.snr * real.g_e.sum(axis=1))
    return int(np.argmax(ratio))


def sas_select(config, real):
    """Субоптимальный выбор: максимум суммарного усиления основного канала (без SNR)"""
    return int(np.argmax(real.g_d.sum(axis=1)))


def oas_rates(config, real):
    return per_antenna_rates(config, real, oas_select(config, real))


def sas_rates(config, real):
    return per_antenna_rates(config, real, sas_select(config, real))


def zero_secrecy_events(scheme, config, g_d, g_e):
    """
    Векторное событие нулевой секретной ёмкости для пакета реализаций

    Сравнение скоростей сводится к сравнению сумм канальных усилений,
    поэтому результат не зависит от SNR. Неравенства строгие.

    Args:
        scheme: SchemeKind
        config: SystemConfig
        g_d: Массив (batch, M, N_d)
        g_e: Массив (batch, M, N_e)

    Returns:
        numpy.ndarray: Булев массив длины batch
    """
    scheme = SchemeKind.parse(scheme)
    rows_d = g_d.sum(axis=-1)
    rows_e = g_e.sum(axis=-1)

    if scheme is SchemeKind.STT:
        return rows_d.sum(axis=-1) < rows_e.sum(axis=-1)

    if scheme is SchemeKind.OAS:
        # Максимум отношения < 1 <=> на каждой антенне main < eve
        return np.all(rows_d < rows_e, axis=-1)

    best = np.argmax(rows_d, axis=-1)
    picked_d = np.take_along_axis(rows_d, best[..., None], axis=-1)[..., 0]
    picked_e = np.take_along_axis(rows_e, best[..., None], axis=-1)[..., 0]
    return picked_d < picked_e


def zero_secrecy_event(scheme, config, real):
    """
    Событие нулевой секретной ёмкости для одной реализации

    Returns:
        bool: True, если скорость основного канала меньше скорости перехвата
    """
    events = zero_secrecy_events(scheme, config, real.g_d[None, ...], real.g_e[None, ...])
    return bool(events[0])
