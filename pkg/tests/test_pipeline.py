import json

import numpy as np
import pytest

from topoant import geometry as g
from topoant import pipeline as pl
from topoant import simulator as sim
from topoant.errors import AllDegenerate
from topoant.objectives import BandSpec, classifier_score
from topoant.results import BENCHMARK_COLUMNS, write_run
from topoant.simulator import CostLedger, MockSimulator, Response, SweepSpec

BAND_A = BandSpec(6.2, 6.8, S_t=-10.2)
BAND_B = BandSpec(5.35, 5.65, S_t=-10.5, f_0=5.5)


def small_a(**kw):
    base = dict(n_candidates=12, c_bounds=(25, 35), budget_low=60, budget_high=20,
                narrow_sweep=SweepSpec(4.96, 8.16, 201))
    return pl.RunConfig(pl.BANDWIDTH_SPECIFIC, 8, BAND_A, **{**base, **kw})


class Recorder:
    """Mock simulator that remembers the order of fidelity requests."""

    def __init__(self):
        self.inner = MockSimulator()
        self.calls = []

    def __call__(self, x, sweep, fidelity):
        self.calls.append(fidelity)
        return self.inner(x, sweep, fidelity)


def test_run_config_defaults():
    cfg = pl.RunConfig(pl.BANDWIDTH_SPECIFIC, 25, BAND_A)
    assert cfg.narrow_sweep.f_start <= 6.2 and cfg.narrow_sweep.f_stop >= 6.8
    assert cfg.enhance_window == pytest.approx((0.85 * 6.2, 1.15 * 6.8))
    assert cfg.alpha_range == pytest.approx((0.5, 2.5))


@pytest.mark.parametrize("kw", [
    dict(strategy="nope"), dict(L=2), dict(n_candidates=0),
    dict(strategy=pl.BANDWIDTH_ENHANCED), dict(center_term="sideways"),
    dict(narrow_sweep=SweepSpec(6.3, 7.0, 11)),
])
def test_run_config_rejects(kw):
    args = {**dict(strategy=pl.BANDWIDTH_SPECIFIC, L=10, band=BAND_A), **kw}
    with pytest.raises(ValueError):
        pl.RunConfig(**args)


def test_strategy_a_single_candidate():
    cfg = small_a(n_candidates=1)
    init = pl.strategy_a_init(cfg)
    x = g.generate_candidate(8, pl.candidate_seed(0, 0), cfg.generation_bounds())
    np.testing.assert_array_equal(init.x0, x)
    assert init.ranking() == [0]


def test_strategy_a_picks_min_of_recomputed_scores():
    cfg = small_a(n_candidates=15, seed=3)
    led = CostLedger()
    init = pl.strategy_a_init(cfg, pl.Evaluator(ledger=led))
    gb = cfg.generation_bounds()
    scores = []
    for i in range(15):
        x = g.generate_candidate(8, [3, i], gb)
        scores.append(classifier_score(sim.simulate(x, cfg.narrow_sweep, sim.LOW), BAND_A))
    assert init.score == min(scores)
    assert init.ranking() == list(np.argsort(scores, kind="stable"))
    assert (led.n_low, led.n_high) == (15, 0)


def test_parallel_selection_matches_serial():
    a = pl.strategy_a_init(small_a(n_candidates=20))
    b = pl.strategy_a_init(small_a(n_candidates=20, parallel_workers=4))
    np.testing.assert_array_equal(a.x0, b.x0)
    assert a.scores == b.scores


def test_all_degenerate():
    with pytest.raises(AllDegenerate):
        pl.strategy_a_init(small_a(n_candidates=5, c_range=(1.0, 1.1)))


def test_strategy_b_keeps_better_scale():
    cfg = pl.RunConfig(pl.BANDWIDTH_ENHANCED, 10, BAND_B, seed=1)
    init = pl.strategy_b_init(cfg)
    assert init.scale in (init.alpha, 1 / init.alpha)
    raw = g.scale_design(init.x0, 1 / init.scale)
    other = g.scale_design(raw, 1 / init.alpha if init.scale == init.alpha else init.alpha)
    other_score = classifier_score(sim.simulate(other, cfg.narrow_sweep, sim.LOW), BAND_B)
    assert init.score <= other_score


def test_strategy_b_unit_alpha_keeps_candidate():
    def notch(x, sweep, fidelity):
        f = sweep.freqs
        return Response(f, -20 / (1 + ((f - 5.5) / 0.3) ** 2), fidelity)

    # a broad sweep equal to the band pins alpha to 1
    cfg = pl.RunConfig(pl.BANDWIDTH_ENHANCED, 10, BAND_B, seed=4,
                       broad_sweep=SweepSpec(5.35, 5.65, 61))
    assert cfg.alpha_range == (1.0, 1.0)
    led = CostLedger()
    init = pl.strategy_b_init(cfg, pl.Evaluator(notch, led))
    assert init.alpha == 1.0 and init.scale == 1.0
    np.testing.assert_array_equal(init.x0, g.generate_candidate(10, [4, 0], cfg.generation_bounds()))
    assert led.n_low == 2


@pytest.mark.parametrize("levels,band", [
    ([0, -5, -15, -15, -5, 0], (1.5, 3.5)),
    ([-12, -12, -12, -12, -12, -12], (0.0, 5.0)),
])
def test_achieved_band(levels, band):
    r = Response(np.arange(6.0), np.array(levels, dtype=float))
    assert pl.achieved_band(r, 2.5) == pytest.approx(band)


def test_achieved_band_missing_anchor():
    r = Response(np.arange(6.0), np.array([-15, -5, 0, 0, -5, -15.0]))
    assert pl.achieved_band(r, 2.5) is None and pl.bandwidth(r, 2.5) == 0.0


@pytest.fixture(scope="module")
def small_run():
    rec = Recorder()
    return pl.run_variable_fidelity(small_a(seed=2), rec), rec


def test_run_phases_and_ledger(small_run):
    res, rec = small_run
    c = res.cost
    assert c["n_low"] + c["n_high"] == len(rec.calls)
    assert sum(c["phases"].values()) == len(rec.calls)
    assert set(c["phases"]) <= {"init:low", "low_tr:low", "high_tr:high"}
    first_high = rec.calls.index("high")
    assert "high" not in rec.calls[:first_high] and "low" not in rec.calls[first_high:]
    assert c["n_high"] <= 20
    assert c["rf_equivalent"] == pytest.approx(c["n_low"] * 60 / 110 + c["n_high"])


def test_run_result_shape(small_run):
    res, _ = small_run
    assert set(res.responses) == {"x0", "x_c", "x_f"}
    assert res.responses["x_f"].fidelity == "high"
    assert res.in_band_max == classifier_score(res.responses["x_f"], BAND_A)
    assert res.spec_met == (res.in_band_max <= -10)
    for x in (res.x_c_star, res.x_f_star):
        assert np.all(x >= g.build_bounds(res.x0, 25, 35).lower - 1e-12)
    rec = json.loads(json.dumps(res.to_record()))
    assert rec["x_f_star"]["L"] == 8 and rec["strategy"] == "bandwidth_specific"
    assert len(rec["responses"]["x_f"]["S11_dB"]) == 201


def test_write_run(small_run, tmp_path):
    res, _ = small_run
    files = write_run(tmp_path, res)
    assert {"result", "responses", "features", "log_low", "log_high"} <= set(files)
    header = (tmp_path / "iterations_low.csv").read_text().splitlines()[0]
    assert header.startswith("iter,delta,rho,U_true,accepted")


def test_benchmark_requires_its_own_entry():
    with pytest.raises(ValueError):
        pl.run_variable_fidelity(pl.RunConfig(pl.BENCHMARK, 8, BAND_A))


def test_benchmark_schema():
    cfg = pl.RunConfig(pl.BENCHMARK, 6, BAND_A, n_candidates=4, c_bounds=(25, 35),
                       budget_low=25, budget_high=8, budget_benchmark_high=25,
                       narrow_sweep=SweepSpec(4.96, 8.16, 161))
    rows = pl.benchmark(cfg)
    assert [r["method"] for r in rows] == list(pl.BENCHMARK_METHODS)
    for r in rows:
        assert tuple(r) == BENCHMARK_COLUMNS
        assert r["total_rf"] == pytest.approx(r["n_low"] * 60 / 110 + r["n_high"])
        assert r["total_rf_hours"] == pytest.approx(r["total_rf"] * 110 / 3600)
    for r in rows[:3]:
        assert r["n_low"] == 0
