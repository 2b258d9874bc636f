"""
Monte Carlo estimation
Воспроизводимая оценка вероятности нулевой секретной ёмкости с доверительным интервалом
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from modules.errors import ValidationError
from modules.model import SchemeKind, sample_realizations, validate
from modules.schemes import zero_secrecy_events

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 65536
DEFAULT_CONFIDENCE = 0.95
MIN_SAMPLES = 1000


@dataclass(frozen=True)
class EstimateWithCI:
    """Оценка вероятности с интервалом Уилсона"""

    p_hat: float
    ci_low: float
    ci_high: float
    n_samples: int
    n_events: int
    seed: int

    @property
    def half_width(self):
        return (self.ci_high - self.ci_low) / 2.0

    def as_csv(self, digits=12):
        return ",".join(
            [
                f"{self.p_hat:.{digits}g}",
                f"{self.ci_low:.{digits}g}",
                f"{self.ci_high:.{digits}g}",
                str(self.n_samples),
                str(self.n_events),
                str(self.seed),
            ]
        )


CSV_HEADER = "p_hat,ci_low,ci_high,n_samples,n_events,seed"


def wilson_interval(n_events, n_samples, confidence=DEFAULT_CONFIDENCE):
    """
    Интервал Уилсона для биномиальной доли

    Returns:
        tuple: (low, high)
    """
    ci = stats.binomtest(int(n_events), int(n_samples)).proportion_ci(
        confidence_level=confidence, method="wilson"
    )
    return max(0.0, float(ci.low)), min(1.0, float(ci.high))


def required_samples(p):
    """Минимальное число реализаций для ~100 событий при вероятности p"""
    if not p > 0:
        return math.inf
    return int(math.ceil(100.0 / p))


def partition_rng(seed, index):
    """
    Независимый поток для раздела index

    SeedSequence(seed, spawn_key=(index,)) совпадает с index-м ребёнком
    SeedSequence(seed).spawn(...), поэтому поток не зависит от числа разделов.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def _partition_sizes(n_samples, partitions):
    base, extra = divmod(n_samples, partitions)
    return [base + (1 if k < extra else 0) for k in range(partitions)]


def count_events(scheme, config, n_samples, rng, chunk_size=DEFAULT_CHUNK_SIZE, complex_gaussian=False):
    """
    Число событий нулевой секретной ёмкости на n_samples реализациях одного потока

    Реализации генерируются пакетами фиксированного размера, так что
    результат детерминирован для данного состояния потока.
    """
    events = 0
    remaining = n_samples
    while remaining > 0:
        size = min(chunk_size, remaining)
        g_d, g_e = sample_realizations(config, rng, size, complex_gaussian=complex_gaussian)
        events += int(np.count_nonzero(zero_secrecy_events(scheme, config, g_d, g_e)))
        remaining -= size
    return events


def _build_estimate(n_events, n_samples, seed, confidence):
    low, high = wilson_interval(n_events, n_samples, confidence)
    p_hat = n_events / n_samples
    return EstimateWithCI(
        p_hat=p_hat,
        ci_low=min(low, p_hat),
        ci_high=max(high, p_hat),
        n_samples=n_samples,
        n_events=n_events,
        seed=int(seed),
    )


def estimate_partitioned(scheme, config, n_samples, seed, partitions=1, workers=1,
                         chunk_size=DEFAULT_CHUNK_SIZE, confidence=DEFAULT_CONFIDENCE,
                         complex_gaussian=False):
    """
    Оценка по независимым разделам

    Каждый раздел k работает на своём потоке partition_rng(seed, k); итог -
    сумма счётчиков, поэтому он не зависит от порядка выполнения и числа
    рабочих потоков.

    Args:
        scheme: SchemeKind
        config: SystemConfig
        n_samples: Общее число реализаций (>= 1000)
        seed: Главное зерно
        partitions: Число разделов
        workers: Число рабочих потоков

    Returns:
        EstimateWithCI
    """
    scheme = SchemeKind.parse(scheme)
    validate(config)
    if n_samples < MIN_SAMPLES:
        raise ValidationError(f"n_samples must be ≥ {MIN_SAMPLES}, got {n_samples}")
    if isinstance(seed, bool) or not 0 <= int(seed) < 2 ** 64:
        raise ValidationError(f"seed must be a 64-bit nonnegative integer, got {seed!r}")
    if partitions < 1:
        raise ValidationError(f"partitions must be ≥ 1, got {partitions}")
    if workers < 1:
        raise ValidationError(f"workers must be ≥ 1, got {workers}")

    sizes = _partition_sizes(n_samples, partitions)

    def run(k):
        return count_events(scheme, config, sizes[k], partition_rng(seed, k), chunk_size, complex_gaussian)

    if workers == 1 or partitions == 1:
        counts = [run(k) for k in range(partitions)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(run, range(partitions)))

    n_events = sum(counts)
    logger.debug(f"{scheme.value}: разделы {counts}, всего {n_events}/{n_samples}")
    return _build_estimate(n_events, n_samples, seed, confidence)


def estimate(scheme, config, n_samples, seed, chunk_size=DEFAULT_CHUNK_SIZE,
             confidence=DEFAULT_CONFIDENCE, complex_gaussian=False):
    """
    Оценка вероятности нулевой секретной ёмкости (один поток)

    Совпадает с estimate_partitioned(..., partitions=1).
    """
    return estimate_partitioned(
        scheme, config, n_samples, seed, partitions=1,
        chunk_size=chunk_size, confidence=confidence, complex_gaussian=complex_gaussian,
    )
