"""
Experiments - MER sweeps, secrecy diversity fitting and figure reproduction
Развёртки по MER, оценка порядка секретного разнесения и воспроизведение рисунков
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from modules.analytic import bounds, p_zero
from modules.errors import CapacityError, SecrecyError, ValidationError
from modules.model import SchemeKind, SystemConfig, is_iid, mer, validate
from modules.montecarlo import EstimateWithCI, estimate_partitioned, required_samples
from services.export import DEFAULT_DIGITS, ensure_dir, write_curve_csv, write_manifest

logger = logging.getLogger(__name__)

FIGURE_IDS = (2, 3, 4, 5)


@dataclass(frozen=True)
class SweepRow:
    """Одна точка кривой: (схема, MER) -> аналитика, Монте-Карло, границы"""

    scheme: SchemeKind
    mer_db: float
    m_tx: int
    n_dest: int
    n_eve: int
    p_analytic: Optional[float] = None
    p_mc: Optional[EstimateWithCI] = None
    p_lower_bound: Optional[float] = None
    p_upper_bound: Optional[float] = None
    mc_unresolved: bool = False
    error: Optional[str] = None
    error_code: int = 0

    def config_summary(self):
        return (self.m_tx, self.n_dest, self.n_eve)


@dataclass(frozen=True)
class DiversityEstimate:
    """Наклон -log10 p по log10 lambda в окне MER"""

    slope: float
    expected: int
    window_db: tuple
    residual: float


def parse_grid(text):
    """
    Разбор сетки "LO:HI:STEP" в дБ

    Returns:
        list: Значения MER в дБ (HI включительно)
    """
    try:
        lo, hi, step = (float(part) for part in str(text).split(":"))
    except ValueError:
        raise ValidationError(f"grid must look like LO:HI:STEP, got '{text}'") from None
    if step <= 0 or hi < lo:
        raise ValidationError(f"grid {text} must have HI >= LO and STEP > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 10) for k in range(count)]


def linear_grid(start, stop, points):
    return [round(float(v), 10) for v in np.linspace(start, stop, int(points))]


def parse_window(text):
    """Разбор окна "LO:HI" в дБ"""
    try:
        lo, hi = (float(part) for part in str(text).split(":"))
    except ValueError:
        raise ValidationError(f"window must look like LO:HI, got '{text}'") from None
    if not lo < hi:
        raise ValidationError(f"window lower edge {lo} must be below upper edge {hi}")
    return lo, hi


def log_log_slope(mer_db, values):
    """
    МНК-наклон -log10(value) по log10(lambda)

    Returns:
        tuple: (наклон, СКО остатков в log10)
    """
    x = np.asarray(mer_db, dtype=float) / 10.0
    y = np.log10(np.asarray(values, dtype=float))
    coeffs = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((np.polyval(coeffs, x) - y) ** 2)))
    return float(-coeffs[0]), residual


def fit_diversity(rows, window_db):
    """
    Оценка обобщённого порядка секретного разнесения

    Args:
        rows: SweepRow одной схемы и конфигурации
        window_db: (lo, hi) окно MER в дБ (асимптотический режим, lo >= 30 дБ)

    Returns:
        DiversityEstimate
    """
    lo, hi = window_db
    if not lo < hi:
        raise ValidationError(f"window lower edge {lo} must be below upper edge {hi}")

    points = [
        r for r in rows
        if r.p_analytic is not None and r.p_analytic > 0 and lo <= r.mer_db <= hi
    ]
    if len(points) < 4:
        raise ValidationError(
            f"fit_diversity needs at least 4 analytic points in [{lo}, {hi}] dB, got {len(points)}"
        )
    if lo < 30:
        logger.warning(f"Окно [{lo}, {hi}] дБ ниже асимптотического режима (рекомендуется >= 30 дБ)")

    slope, residual = log_log_slope([r.mer_db for r in points], [r.p_analytic for r in points])
    first = points[0]
    return DiversityEstimate(
        slope=slope,
        expected=first.m_tx * first.n_dest,
        window_db=(float(lo), float(hi)),
        residual=residual,
    )


def crossings(rows_a, rows_b):
    """Число смен знака разности двух аналитических кривых на общей сетке"""
    by_mer = {r.mer_db: r.p_analytic for r in rows_b if r.p_analytic is not None}
    diffs = [
        r.p_analytic - by_mer[r.mer_db]
        for r in sorted(rows_a, key=lambda r: r.mer_db)
        if r.p_analytic is not None and r.mer_db in by_mer
    ]
    signs = [d > 0 for d in diffs if d != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def unbracketed(rows, rtol=1e-2, min_mer_db=30.0):
    """MER точек асимптотики, где аналитика выходит за границы (с допуском rtol)"""
    return [
        r.mer_db for r in rows
        if r.mer_db >= min_mer_db and None not in (r.p_analytic, r.p_lower_bound, r.p_upper_bound)
        and not r.p_lower_bound * (1.0 - rtol) <= r.p_analytic <= r.p_upper_bound * (1.0 + rtol)
    ]


def rows_exit_code(rows):
    """Наибольший код ошибки среди точек (0, если ошибок нет)"""
    return max((r.error_code for r in rows if r.error), default=0)


def _row_seed(seed, scheme, config, mer_db):
    # Отдельное зерно на точку: независимо от порядка и состава развёртки
    key = [int(seed), list(SchemeKind).index(scheme), config.m_tx, config.n_dest, config.n_eve,
           int(round(mer_db * 1000)) & 0xFFFFFFFF]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])


class ExperimentRunner:
    """Развёртки и рисунки"""

    def __init__(self, settings=None):
        """
        Args:
            settings: Словарь настроек из config.yaml
        """
        settings = settings or {}
        self.numerics = settings.get("numerics", {})
        self.mc_config = settings.get("montecarlo", {})
        self.exp_config = settings.get("experiments", {})

        self.rel_tol = self.numerics.get("rel_tol", 1e-9)
        self.max_panels = self.numerics.get("max_panels", 64)
        self.clamp_tol = self.numerics.get("clamp_tol", 1e-12)
        self.subset_cap = self.numerics.get("subset_cap", 20)
        self.partitions = self.mc_config.get("partitions", 1)
        self.workers = self.mc_config.get("workers", 1)
        self.chunk_size = self.mc_config.get("chunk_size", 65536)
        self.confidence = self.mc_config.get("confidence", 0.95)
        self.complex_gaussian = self.mc_config.get("complex_gaussian", False)
        self.digits = self.exp_config.get("digits", DEFAULT_DIGITS)
        self.bracket_rtol = self.exp_config.get("bracket_rtol", 1e-2)

    def _evaluate_row(self, scheme, template, mer_db, mc_samples, with_bounds, seed):
        config = template.with_mer(mer_db)
        lam = mer(config)
        values = {}
        error = None
        error_code = 0
        mc_unresolved = False

        try:
            if is_iid(config):
                values["p_analytic"] = p_zero(
                    scheme, config.m_tx, config.n_dest, config.n_eve, lam,
                    rel_tol=self.rel_tol, max_panels=self.max_panels, clamp_tol=self.clamp_tol,
                )
            else:
                logger.warning(f"{scheme.value} @ {mer_db} дБ: замкнутые формы требуют i.i.d. каналов, только Монте-Карло")

            if with_bounds:
                try:
                    pair = bounds(scheme, config, subset_cap=self.subset_cap)
                    values["p_lower_bound"] = pair.lower(lam)
                    values["p_upper_bound"] = pair.upper(lam)
                except CapacityError as e:
                    logger.warning(f"Границы пропущены: {e}")

            if mc_samples > 0:
                values["p_mc"] = estimate_partitioned(
                    scheme, config, mc_samples, _row_seed(seed, scheme, config, mer_db),
                    partitions=self.partitions, chunk_size=self.chunk_size,
                    confidence=self.confidence, complex_gaussian=self.complex_gaussian,
                )
                p_ref = values.get("p_analytic")
                if p_ref is not None and mc_samples < required_samples(p_ref):
                    mc_unresolved = True
                    logger.warning(
                        f"{scheme.value} @ {mer_db} дБ: p = {p_ref:.3e}, нужно >= {required_samples(p_ref)} "
                        f"реализаций, задано {mc_samples}"
                    )

            if "p_analytic" not in values and "p_mc" not in values:
                raise ValidationError("non-i.i.d. configuration needs Monte Carlo samples")

        except SecrecyError as e:
            error = str(e)
            error_code = e.exit_code
            logger.error(f"Ошибка в точке {scheme.value} @ {mer_db} дБ: {e}")

        return SweepRow(
            scheme=scheme,
            mer_db=float(mer_db),
            m_tx=config.m_tx,
            n_dest=config.n_dest,
            n_eve=config.n_eve,
            mc_unresolved=mc_unresolved,
            error=error,
            error_code=error_code,
            **values,
        )

    def sweep_mer(self, schemes, config_template, mer_grid_db, mc_samples=0, with_bounds=False, seed=0):
        """
        Развёртка по MER

        Args:
            schemes: Набор схем
            config_template: SystemConfig (MER подставляется из сетки)
            mer_grid_db: Сетка MER в дБ
            mc_samples: Реализаций Монте-Карло на точку (0 - без моделирования)
            with_bounds: Добавить асимптотические границы
            seed: Главное зерно

        Returns:
            list: SweepRow, упорядоченные по схеме и MER
        """
        schemes = sorted({SchemeKind.parse(s) for s in schemes}, key=lambda s: s.value)
        grid = [float(v) for v in mer_grid_db]
        if not schemes:
            raise ValidationError("at least one scheme is required")
        if not grid:
            raise ValidationError("MER grid is empty")
        if mc_samples < 0:
            raise ValidationError(f"mc_samples must be ≥ 0, got {mc_samples}")
        validate(config_template)

        tasks = [(s, v) for s in schemes for v in grid]
        logger.info(
            f"Развёртка: схемы {[s.value for s in schemes]}, {len(grid)} точек, "
            f"(M, N_d, N_e) = {config_template.summary()}, MC = {mc_samples}"
        )

        def run(task):
            scheme, mer_db = task
            return self._evaluate_row(scheme, config_template, mer_db, mc_samples, with_bounds, seed)

        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                rows = list(pool.map(run, tasks))
        else:
            rows = [run(t) for t in tasks]

        return sorted(rows, key=lambda r: (r.scheme.value, r.mer_db))

    def write_sweep(self, rows, config, grid, out_dir, mc_samples=0, seed=0, version="unknown"):
        """
        Запись развёртки: CSV на каждую схему и манифест с ошибками точек

        Returns:
            list: Пути к записанным файлам (манифест последним)
        """
        out_dir = ensure_dir(out_dir)
        m, nd, ne = config.summary()
        written = []
        curves = []

        for scheme in sorted({r.scheme for r in rows}, key=lambda s: s.value):
            scheme_rows = [r for r in rows if r.scheme is scheme]
            path = write_curve_csv(out_dir / f"sweep_M{m}_Nd{nd}_Ne{ne}_{scheme.value}.csv", scheme_rows, self.digits)
            written.append(path)
            curve = _curve(path.stem, scheme, config, grid)
            curve["bounds"] = any(r.p_lower_bound is not None for r in scheme_rows)
            curves.append(_manifest_entry(curve, scheme_rows, path, self.bracket_rtol))

        failed = [r for r in rows if r.error]
        if failed:
            logger.warning(f"Точек с ошибками: {len(failed)} из {len(rows)}")

        manifest = {
            "sweep": {"M": m, "N_d": nd, "N_e": ne},
            "version": version,
            "seed": int(seed),
            "mc_samples": int(mc_samples),
            "partitions": int(self.partitions),
            "rel_tol": float(self.rel_tol),
            "curves": curves,
            "exit_code": rows_exit_code(rows),
        }
        written.append(write_manifest(out_dir / "manifest.yaml", manifest))
        return written

    # --- Рисунки ---

    def _grid(self, fig_id, default):
        fig_cfg = self.exp_config.get("figures", {}).get(f"fig{fig_id}", {})
        start, stop, points = (fig_cfg.get(k, d) for k, d in zip(("start", "stop", "points"), default))
        return linear_grid(start, stop, points)

    def figure_curves(self, fig_id):
        """
        Описание кривых рисунка

        Returns:
            list: Словари с ключами name, scheme, config, grid, bounds, by_m
        """
        every = sorted(SchemeKind, key=lambda s: s.value)
        curves = []

        if fig_id == 2:
            grid = self._grid(2, (-10.0, 30.0, 41))
            for m in (2, 4):
                for scheme in every:
                    curves.append(_curve(f"fig2_M{m}_Nd1_Ne1_{scheme.value}", scheme, SystemConfig.iid(m, 1, 1), grid))

        elif fig_id == 3:
            fig_cfg = self.exp_config.get("figures", {}).get("fig3", {})
            mer_db = float(fig_cfg.get("mer_db", 3.0))
            m_values = list(range(int(fig_cfg.get("m_min", 1)), int(fig_cfg.get("m_max", 8)) + 1))
            for scheme in every:
                curve = _curve(f"fig3_Nd1_Ne1_{scheme.value}", scheme, SystemConfig.iid(1, 1, 1), [mer_db])
                curve["by_m"] = m_values
                curves.append(curve)

        elif fig_id == 4:
            grid = self._grid(4, (-10.0, 30.0, 41))
            for dims in ((4, 1, 1), (4, 4, 4)):
                for scheme in every:
                    name = f"fig4_M{dims[0]}_Nd{dims[1]}_Ne{dims[2]}_{scheme.value}"
                    curves.append(_curve(name, scheme, SystemConfig.iid(*dims), grid))

        elif fig_id == 5:
            grid = self._grid(5, (0.0, 60.0, 31))
            curve = _curve("fig5_M4_Nd4_Ne2_oas", SchemeKind.OAS, SystemConfig.iid(4, 4, 2), grid)
            curve["bounds"] = True
            curves.append(curve)

        else:
            raise ValidationError(f"figure id must be one of {FIGURE_IDS}, got {fig_id}")

        return curves

    def figure(self, fig_id, out_dir, mc_samples=0, seed=0, version="unknown"):
        """
        Воспроизведение рисунка: CSV на каждую кривую и манифест

        Args:
            fig_id: Номер рисунка (2, 3, 4, 5)
            out_dir: Каталог результатов
            mc_samples: Реализаций Монте-Карло на точку
            seed: Главное зерно
            version: Версия инструмента для манифеста

        Returns:
            list: Пути к записанным файлам (манифест последним)
        """
        curves = self.figure_curves(fig_id)
        out_dir = ensure_dir(out_dir)
        written = []
        manifest_curves = []

        logger.info(f"Рисунок {fig_id}: {len(curves)} кривых, MC = {mc_samples}, seed = {seed}")

        for curve in curves:
            if curve["by_m"]:
                rows = []
                for m in curve["by_m"]:
                    config = curve["config"].with_dims(m_tx=m)
                    rows += self.sweep_mer([curve["scheme"]], config, curve["grid"], mc_samples, curve["bounds"], seed)
            else:
                rows = self.sweep_mer([curve["scheme"]], curve["config"], curve["grid"], mc_samples, curve["bounds"], seed)

            path = write_curve_csv(out_dir / f"{curve['name']}.csv", rows, self.digits, with_m_tx=bool(curve["by_m"]))
            written.append(path)
            manifest_curves.append(_manifest_entry(curve, rows, path, self.bracket_rtol))

        manifest = {
            "figure": int(fig_id),
            "version": version,
            "seed": int(seed),
            "mc_samples": int(mc_samples),
            "partitions": int(self.partitions),
            "rel_tol": float(self.rel_tol),
            "curves": manifest_curves,
        }
        if mc_samples == 0:
            manifest["note"] = "Monte Carlo columns are empty: analytic values only"

        written.append(write_manifest(Path(out_dir) / "manifest.yaml", manifest))
        return written


def _curve(name, scheme, config, grid):
    return {"name": name, "scheme": scheme, "config": config, "grid": grid, "bounds": False, "by_m": None}


def _manifest_entry(curve, rows, path, bracket_rtol):
    entry = {
        "file": Path(path).name,
        "scheme": curve["scheme"].value,
        "config": curve["config"].to_dict(),
        "grid_db": list(curve["grid"]),
        "bounds": bool(curve["bounds"]),
        "mc_unresolved_mer_db": [r.mer_db for r in rows if r.mc_unresolved],
        "errors": [f"{r.mer_db}: {r.error}" for r in rows if r.error],
    }
    if curve["by_m"]:
        entry["m_tx"] = list(curve["by_m"])

    if curve["bounds"]:
        entry["unbracketed_mer_db"] = unbracketed(rows, bracket_rtol)
        tail = [r for r in rows if r.mer_db >= 40.0 and r.p_analytic and r.p_lower_bound and r.p_upper_bound]
        if len(tail) >= 2:
            mers = [r.mer_db for r in tail]
            entry["slopes_40_60_db"] = {
                "exact": round(log_log_slope(mers, [r.p_analytic for r in tail])[0], 6),
                "lower": round(log_log_slope(mers, [r.p_lower_bound for r in tail])[0], 6),
                "upper": round(log_log_slope(mers, [r.p_upper_bound for r in tail])[0], 6),
            }
    return entry


def sweep_mer(schemes, config_template, mer_grid_db, mc_samples=0, with_bounds=False, seed=0, settings=None):
    """Развёртка по MER с настройками settings (см. ExperimentRunner.sweep_mer)"""
    return ExperimentRunner(settings).sweep_mer(schemes, config_template, mer_grid_db, mc_samples, with_bounds, seed)


def figure(fig_id, out_dir, mc_samples=0, seed=0, settings=None, version="unknown"):
    """Воспроизведение рисунка с настройками settings (см. ExperimentRunner.figure)"""
    return ExperimentRunner(settings).figure(fig_id, out_dir, mc_samples, seed, version)
