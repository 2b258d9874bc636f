"""
Тесты развёрток, оценки разнесения и воспроизведения рисунков
Tests for MER sweeps, diversity fitting and figure reproduction
"""

import csv

import numpy as np
import pytest
import yaml

from modules.errors import ValidationError
from modules.model import SchemeKind, SystemConfig
from services.experiments import (
    ExperimentRunner,
    SweepRow,
    crossings,
    fit_diversity,
    log_log_slope,
    parse_grid,
    parse_window,
    figure,
    rows_exit_code,
    sweep_mer,
    unbracketed,
)


@pytest.fixture
def runner():
    return ExperimentRunner()


def _read_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


class TestGrids:

    def test_parse_grid(self):
        assert parse_grid("0:10:2.5") == [0.0, 2.5, 5.0, 7.5, 10.0]
        assert parse_grid("-10:30:1")[-1] == 30.0
        assert len(parse_grid("-10:30:1")) == 41

    @pytest.mark.parametrize("text", ["0:10", "a:b:c", "10:0:1", "0:10:0"])
    def test_bad_grid(self, text):
        with pytest.raises(ValidationError):
            parse_grid(text)

    def test_parse_window(self):
        assert parse_window("40:60") == (40.0, 60.0)
        with pytest.raises(ValidationError):
            parse_window("60:40")


class TestSweep:

    def test_symmetry_anchor_row(self, runner):
        rows = runner.sweep_mer([SchemeKind.STT], SystemConfig.iid(2, 1, 1), [0.0])
        assert len(rows) == 1
        assert rows[0].p_analytic == pytest.approx(0.5, abs=1e-12)
        assert rows[0].p_mc is None
        assert rows[0].error is None

    def test_monotone_curve(self, runner):
        rows = runner.sweep_mer(["stt"], SystemConfig.iid(4, 1, 1), parse_grid("-10:10:1"))
        assert len(rows) == 21
        values = [r.p_analytic for r in rows]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_rows_sorted_by_scheme_then_mer(self, runner):
        rows = runner.sweep_mer(["stt", "oas", "sas"], SystemConfig.iid(2, 1, 1), [5.0, -5.0, 0.0])
        keys = [(r.scheme.value, r.mer_db) for r in rows]
        assert keys == sorted(keys)
        assert [r.scheme for r in rows[:3]] == [SchemeKind.OAS] * 3

    def test_bounds_and_monte_carlo(self, runner):
        rows = runner.sweep_mer(["oas"], SystemConfig.iid(2, 1, 1), [0.0], mc_samples=50000, with_bounds=True, seed=3)
        row = rows[0]
        assert row.p_mc.n_samples == 50000
        assert abs(row.p_mc.p_hat - row.p_analytic) <= 3 * row.p_mc.half_width
        assert row.p_lower_bound <= row.p_upper_bound
        assert not row.mc_unresolved

    def test_rare_event_flag(self, runner):
        rows = runner.sweep_mer(["oas"], SystemConfig.iid(2, 2, 1), [20.0], mc_samples=1000, seed=1)
        assert rows[0].mc_unresolved
        assert rows[0].error is None

    def test_sweep_is_reproducible(self, runner):
        config = SystemConfig.iid(2, 1, 1)
        first = runner.sweep_mer(["sas", "stt"], config, [0.0, 3.0], mc_samples=2000, seed=8)
        second = runner.sweep_mer(["stt", "sas"], config, [3.0, 0.0], mc_samples=2000, seed=8)
        assert first == second

    def test_non_iid_needs_monte_carlo(self, runner):
        config = SystemConfig(2, 1, 1, alpha_d=[[1.0], [0.5]])
        rows = runner.sweep_mer(["stt"], config, [0.0])
        assert rows[0].p_analytic is None
        assert rows[0].error is not None

        rows = runner.sweep_mer(["stt"], config, [0.0], mc_samples=5000, seed=2)
        assert rows[0].p_analytic is None
        assert rows[0].p_mc is not None
        assert rows[0].error is None

    def test_bounds_skipped_above_subset_cap(self):
        runner = ExperimentRunner({"numerics": {"subset_cap": 2}})
        config = SystemConfig(2, 1, 2, alpha_e=[[1.0, 2.0], [0.5, 1.5]])
        rows = runner.sweep_mer(["stt"], config, [10.0], mc_samples=2000, with_bounds=True, seed=4)
        assert rows[0].p_lower_bound is None
        assert rows[0].p_mc is not None
        assert rows[0].error is None

    def test_parallel_rows_match_serial(self):
        config = SystemConfig.iid(2, 2, 1)
        serial = ExperimentRunner().sweep_mer(["oas", "sas"], config, [0.0, 5.0], mc_samples=2000, seed=6)
        parallel = ExperimentRunner({"montecarlo": {"workers": 4}}).sweep_mer(
            ["oas", "sas"], config, [0.0, 5.0], mc_samples=2000, seed=6
        )
        assert serial == parallel

    def test_empty_inputs(self, runner):
        with pytest.raises(ValidationError):
            runner.sweep_mer([], SystemConfig.iid(1, 1, 1), [0.0])
        with pytest.raises(ValidationError):
            runner.sweep_mer(["stt"], SystemConfig.iid(1, 1, 1), [])


class TestDiversity:

    @pytest.mark.parametrize("scheme", list(SchemeKind))
    @pytest.mark.parametrize("dims", [(2, 1, 1), (2, 2, 1), (3, 1, 2), (4, 4, 2)])
    def test_slope_equals_m_times_nd(self, runner, scheme, dims):
        rows = runner.sweep_mer([scheme], SystemConfig.iid(*dims), parse_grid("40:60:2"))
        estimate = fit_diversity(rows, (40.0, 60.0))
        assert estimate.expected == dims[0] * dims[1]
        assert estimate.slope == pytest.approx(estimate.expected, rel=0.05)

    @pytest.mark.parametrize("scheme, dims, expected, tol", [
        (SchemeKind.STT, (2, 1, 1), 2.0, 0.1),
        (SchemeKind.OAS, (2, 2, 1), 4.0, 0.1),
        (SchemeKind.SAS, (3, 1, 2), 3.0, 0.15),
    ])
    def test_moderate_window(self, runner, scheme, dims, expected, tol):
        rows = runner.sweep_mer([scheme], SystemConfig.iid(*dims), parse_grid("30:50:1"))
        assert fit_diversity(rows, (30.0, 50.0)).slope == pytest.approx(expected, abs=tol)

    def test_too_few_points(self, runner):
        rows = runner.sweep_mer(["stt"], SystemConfig.iid(2, 1, 1), [40.0, 50.0, 60.0])
        with pytest.raises(ValidationError):
            fit_diversity(rows, (40.0, 60.0))

    def test_log_log_slope_of_power_law(self):
        mer_db = np.arange(0.0, 60.0, 5.0)
        slope, residual = log_log_slope(mer_db, 3.0 * (10 ** (mer_db / 10)) ** -4)
        assert slope == pytest.approx(4.0, rel=1e-10)
        assert residual < 1e-10


class TestCrossover:

    def test_sas_crosses_stt_once(self, runner):
        grid = parse_grid("-10:10:0.5")
        rows = runner.sweep_mer(["sas", "stt"], SystemConfig.iid(4, 4, 4), grid)
        sas = [r for r in rows if r.scheme is SchemeKind.SAS]
        stt = [r for r in rows if r.scheme is SchemeKind.STT]
        assert crossings(sas, stt) == 1
        assert sas[0].p_analytic < stt[0].p_analytic
        assert sas[-1].p_analytic > stt[-1].p_analytic


class TestFigures:

    def test_unknown_figure(self, runner, tmp_path):
        with pytest.raises(ValidationError):
            runner.figure(7, tmp_path)

    def test_fig2_anchor(self, runner, tmp_path):
        runner.figure(2, tmp_path)
        rows = _read_csv(tmp_path / "fig2_M2_Nd1_Ne1_stt.csv")
        assert len(rows) == 41
        anchor = next(r for r in rows if float(r["mer_db"]) == 0.0)
        assert float(anchor["p_analytic"]) == pytest.approx(0.5, abs=1e-12)
        assert anchor["p_mc"] == ""

    def test_fig3_single_antenna_row(self, runner, tmp_path):
        runner.figure(3, tmp_path)
        values = []
        for scheme in ("oas", "sas", "stt"):
            rows = _read_csv(tmp_path / f"fig3_Nd1_Ne1_{scheme}.csv")
            assert [int(r["m_tx"]) for r in rows] == list(range(1, 9))
            values.append(float(rows[0]["p_analytic"]))
        assert values[0] == pytest.approx(values[1], rel=1e-8)
        assert values[0] == pytest.approx(values[2], rel=1e-8)

    def test_fig4_emits_both_configurations(self, runner, tmp_path):
        written = runner.figure(4, tmp_path)
        names = {p.name for p in written}
        assert "fig4_M4_Nd1_Ne1_sas.csv" in names
        assert "fig4_M4_Nd4_Ne4_stt.csv" in names
        assert len(names) == 7

    def test_fig5_bounds_and_manifest(self, runner, tmp_path):
        written = runner.figure(5, tmp_path, seed=5, version="test")
        rows = _read_csv(tmp_path / "fig5_M4_Nd4_Ne2_oas.csv")
        assert len(rows) == 31
        for r in rows:
            if float(r["mer_db"]) >= 30.0:
                assert float(r["p_lower_bound"]) <= float(r["p_analytic"]) <= float(r["p_upper_bound"])

        with open(written[-1], "r", encoding="utf-8") as f:
            manifest = yaml.safe_load(f)
        assert manifest["figure"] == 5
        assert manifest["version"] == "test"
        assert manifest["seed"] == 5
        curve = manifest["curves"][0]
        assert curve["unbracketed_mer_db"] == []
        assert curve["slopes_40_60_db"]["exact"] == pytest.approx(16.0, rel=0.05)
        assert curve["slopes_40_60_db"]["lower"] == pytest.approx(16.0, rel=1e-6)
        slopes = curve["slopes_40_60_db"]
        assert abs(slopes["exact"] - slopes["upper"]) <= 0.2
        assert abs(slopes["exact"] - slopes["lower"]) <= 0.2

    def test_byte_stable_with_monte_carlo(self, runner, tmp_path):
        runner.figure(3, tmp_path / "a", mc_samples=2000, seed=42)
        runner.figure(3, tmp_path / "b", mc_samples=2000, seed=42)
        for name in ("fig3_Nd1_Ne1_oas.csv", "fig3_Nd1_Ne1_sas.csv", "fig3_Nd1_Ne1_stt.csv", "manifest.yaml"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    @pytest.mark.slow
    @pytest.mark.parametrize("fig_id", [2, 3, 4, 5])
    def test_monte_carlo_columns_match(self, runner, tmp_path, fig_id):
        written = runner.figure(fig_id, tmp_path, mc_samples=10 ** 5, seed=2024)
        for path in written[:-1]:
            for r in _read_csv(path):
                p_hat = float(r["p_mc"])
                half = (float(r["ci_high"]) - float(r["ci_low"])) / 2
                exact = float(r["p_analytic"])
                if exact * 10 ** 5 >= 100:
                    assert abs(p_hat - exact) <= 3 * half, (path.name, r)


def test_unbracketed_reports_violations():
    rows = [
        SweepRow(SchemeKind.SAS, 30.0, 2, 1, 1, p_analytic=1.0, p_lower_bound=2.0, p_upper_bound=3.0),
        SweepRow(SchemeKind.SAS, 40.0, 2, 1, 1, p_analytic=1.995, p_lower_bound=2.0, p_upper_bound=3.0),
        SweepRow(SchemeKind.SAS, 10.0, 2, 1, 1, p_analytic=1.0, p_lower_bound=2.0, p_upper_bound=3.0),
    ]
    assert unbracketed(rows, rtol=1e-2) == [30.0]


def test_row_errors_carry_exit_codes(runner, tmp_path):
    config = SystemConfig(2, 1, 1, alpha_d=[[1.0], [0.5]])
    rows = runner.sweep_mer(["stt"], config, [0.0, 10.0])
    assert all(r.error and r.error_code == 2 for r in rows)
    assert rows_exit_code(rows) == 2
    assert rows_exit_code(runner.sweep_mer(["stt"], SystemConfig.iid(2, 1, 1), [0.0])) == 0

    written = runner.write_sweep(rows, config, [0.0, 10.0], tmp_path, version="test")
    manifest = yaml.safe_load(written[-1].read_text(encoding="utf-8"))
    assert manifest["exit_code"] == 2
    assert len(manifest["curves"][0]["errors"]) == 2


def test_module_level_helpers(tmp_path):
    rows = sweep_mer(["oas"], SystemConfig.iid(2, 1, 1), [0.0], settings={"numerics": {"rel_tol": 1e-8}})
    assert rows[0].p_analytic == pytest.approx(0.25, abs=1e-12)
    written = figure(5, tmp_path, settings={"experiments": {"figures": {"fig5": {"start": 30, "stop": 60, "points": 7}}}})
    assert len(_read_csv(written[0])) == 7


@pytest.mark.parametrize("scheme", list(SchemeKind))
def test_slope_converges_as_window_moves_right(runner, scheme):
    rows = runner.sweep_mer([scheme], SystemConfig.iid(3, 1, 2), parse_grid("20:60:2"))
    early = fit_diversity(rows, (20.0, 40.0))
    late = fit_diversity(rows, (40.0, 60.0))
    assert abs(late.slope - late.expected) < abs(early.slope - early.expected)
