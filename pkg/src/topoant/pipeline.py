"""End-to-end variable-fidelity runs and the benchmark harness.

A run picks a starting design from random candidates (in-band min-max
ranking, or frequency-scaling classification), tunes it with the trust-region
engine on the low-fidelity model, then refines the result on the
high-fidelity model. Every simulation is charged to exactly one phase of the
shared cost ledger.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .errors import AllDegenerate, BudgetExhausted, DegenerateCenter, TopoAntError
from .features import FeatureSet, extract
from .geometry import Bounds
from .objectives import (
    BandSpec,
    classifier_score,
    optimize_alpha,
    u_bw_specific,
    u_least_squares,
    u_minmax,
    u_stage1,
    u_stage2,
)
from .optimizer import EVERY_ACCEPT, ONCE, FDPolicy, TRConfig, TrustRegionState, tr_optimize
from .simulator import HIGH, LOW, CostLedger, MockSimulator, Response, SweepSpec, T_HIGH_S

log = logging.getLogger(__name__)

BANDWIDTH_SPECIFIC = "bandwidth_specific"
BANDWIDTH_ENHANCED = "bandwidth_enhanced"
BENCHMARK = "benchmark"
STRATEGIES = (BANDWIDTH_SPECIFIC, BANDWIDTH_ENHANCED, BENCHMARK)

INIT, LOW_TR, HIGH_TR = "init", "low_tr", "high_tr"
SPEC_LEVEL_DB = -10.0


@dataclass(frozen=True)
class RunConfig:
    strategy: str
    L: int
    band: BandSpec
    n_candidates: int = 200
    broad_sweep: SweepSpec | None = None
    narrow_sweep: SweepSpec | None = None
    seed: int = 0
    c_range: tuple = (25.0, 35.0)          # sizing factor range for fresh candidates
    c_bounds: tuple | None = None          # absolute C bounds for tuning
    c_margin: float = 2.0                  # C(0) -/+ margin when c_bounds is None
    rho_f_max: float = 0.5
    enhance_window: tuple | None = None
    # stage-2 middle-minimum term: "centered" steers it to f_0, "literal" minimizes its frequency
    center_term: str = "centered"
    budget_init_low: int = 400
    budget_low: int = 450
    budget_high: int = 120
    budget_benchmark_high: int = 400
    rebuild_high: str = ONCE
    secant: bool = True
    fd: FDPolicy = FDPolicy()
    parallel_workers: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.L < 3:
            raise ValueError("L must be >= 3")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.strategy == BANDWIDTH_ENHANCED and self.band.f_0 is None:
            raise ValueError("bandwidth_enhanced strategy requires band.f_0")
        b = self.band
        if self.broad_sweep is None:
            object.__setattr__(self, "broad_sweep", SweepSpec(0.5 * b.f_L, 2.5 * b.f_H, 801))
        if self.narrow_sweep is None:
            object.__setattr__(self, "narrow_sweep", SweepSpec(0.8 * b.f_L, 1.2 * b.f_H, 401))
        if self.center_term not in ("literal", "centered"):
            raise ValueError(f"unknown center_term {self.center_term!r}")
        if self.enhance_window is None:
            object.__setattr__(self, "enhance_window", (0.85 * b.f_L, 1.15 * b.f_H))
        ns = self.narrow_sweep
        if not (ns.f_start <= b.f_L and b.f_H <= ns.f_stop):
            raise ValueError("narrow_sweep must cover [f_L, f_H]")

    @property
    def alpha_range(self) -> tuple:
        return (self.broad_sweep.f_start / self.band.f_L, self.broad_sweep.f_stop / self.band.f_H)

    def generation_bounds(self) -> Bounds:
        return geometry.generation_bounds(self.L, self.c_range, self.rho_f_max)


class Evaluator:
    """Simulator front-end that charges the ledger and keeps every response."""

    def __init__(self, simulator=None, ledger: CostLedger | None = None):
        self.simulator = simulator or MockSimulator()
        self.ledger = ledger if ledger is not None else CostLedger()
        self.responses: dict = {}
        self.phase = INIT

    def response(self, x, sweep: SweepSpec, fidelity: str, phase: str | None = None) -> Response:
        x = np.asarray(x, dtype=float)
        r = self.simulator(x, sweep, fidelity)
        self.ledger.record(fidelity, phase or self.phase, seconds=r.cost_units or None)
        self.responses[(x.tobytes(), sweep, fidelity)] = r
        return r

    def cached(self, x, sweep: SweepSpec, fidelity: str) -> Response | None:
        return self.responses.get((np.asarray(x, dtype=float).tobytes(), sweep, fidelity))

    def features(self, sweep: SweepSpec, fidelity: str, window, threshold: float, phase: str,
                 include_samples: bool = False):
        def evaluate(x) -> FeatureSet:
            r = self.response(x, sweep, fidelity, phase)
            return extract(r, window, threshold, include_samples=include_samples)
        return evaluate


def _map(fn, items, workers: int):
    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def candidate_seed(seed: int, index: int):
    """Per-candidate seed so results do not depend on evaluation order."""
    return [int(seed), int(index)]


@dataclass
class InitResult:
    x0: np.ndarray
    response: Response
    score: float
    candidates: list = field(default_factory=list)   # design vectors (None if invalid)
    scores: list = field(default_factory=list)
    responses: list = field(default_factory=list)
    alpha: float | None = None
    scale: float | None = None
    n_tried: int = 0

    def ranking(self) -> list[int]:
        """Candidate indices from best to worst score (stable on ties)."""
        return [int(i) for i in np.argsort(self.scores, kind="stable")
                if self.candidates[i] is not None]


def strategy_a_init(cfg: RunConfig, ev: Evaluator | None = None) -> InitResult:
    """Rank random candidates by in-band worst reflection (low fidelity)."""
    ev = ev or Evaluator()
    gb = cfg.generation_bounds()

    def job(i):
        try:
            x = geometry.generate_candidate(cfg.L, candidate_seed(cfg.seed, i), gb)
            r = ev.response(x, cfg.narrow_sweep, LOW, INIT)
        except TopoAntError as exc:
            log.debug("candidate %d rejected: %s", i, exc)
            return None, None, math.inf
        return x, r, classifier_score(r, cfg.band)

    results = _map(job, range(cfg.n_candidates), cfg.parallel_workers)
    scores = [s for _, _, s in results]
    if all(x is None for x, _, _ in results):
        raise AllDegenerate("every candidate failed to decode or enclose the feed")
    best = int(np.argmin(scores))
    x0, r0, s0 = results[best]
    return InitResult(x0, r0, s0, [x for x, _, _ in results], scores,
                      [r for _, r, _ in results], n_tried=cfg.n_candidates)


def strategy_b_init(cfg: RunConfig, ev: Evaluator | None = None) -> InitResult:
    """Scan random candidates until one can be frequency-scaled into the band.

    Each candidate is simulated once over the broad sweep; the scale that best
    places its response in the band is found by interpolation. An accepted
    candidate is re-simulated at both ``C*alpha`` and ``C/alpha`` over the
    narrow sweep and the better of the two is kept.
    """
    ev = ev or Evaluator()
    gb = cfg.generation_bounds()
    band = cfg.band
    used, i = 0, 0
    while True:
        if used + 1 > cfg.budget_init_low:
            raise BudgetExhausted(
                f"no candidate accepted within {cfg.budget_init_low} low-fidelity evaluations")
        try:
            x = geometry.generate_candidate(cfg.L, candidate_seed(cfg.seed, i), gb)
        except TopoAntError:
            i += 1
            continue
        i += 1
        r = ev.response(x, cfg.broad_sweep, LOW, INIT)
        used += 1
        alpha, uc = optimize_alpha(r, band, cfg.alpha_range)
        if uc > 0:
            continue
        factors = [alpha] if alpha == 1.0 else [alpha, 1.0 / alpha]
        best = None
        for c in factors:
            xs = geometry.scale_design(x, c)
            rs = ev.response(xs, cfg.narrow_sweep, LOW, INIT)
            used += 1
            score = classifier_score(rs, band)
            if best is None or score < best[2]:
                best = (xs, rs, score, c)
        xs, rs, score, c = best
        return InitResult(xs, rs, score, [xs], [score], [rs], alpha=alpha, scale=c, n_tried=i)


def achieved_band(r: Response, anchor: float, level: float = SPEC_LEVEL_DB):
    """Contiguous ``level`` dB band of ``r`` around ``anchor`` as ``(lo, hi)``, or None."""
    f, s = r.freqs, r.levels
    if not f[0] <= anchor <= f[-1] or np.interp(anchor, f, s) > level:
        return None
    below = s <= level
    k = int(np.clip(np.searchsorted(f, anchor), 0, f.size - 1))
    if not below[k]:
        k = k - 1 if k > 0 and below[k - 1] else k
    i = k
    while i > 0 and below[i - 1]:
        i -= 1
    j = k
    while j < f.size - 1 and below[j + 1]:
        j += 1

    def cross(a, b):
        t = (level - s[a]) / (s[b] - s[a])
        return float(f[a] + t * (f[b] - f[a]))

    lo = cross(i - 1, i) if i > 0 else float(f[0])
    hi = cross(j, j + 1) if j < f.size - 1 else float(f[-1])
    return lo, hi


def bandwidth(r: Response, anchor: float, level: float = SPEC_LEVEL_DB) -> float:
    b = achieved_band(r, anchor, level)
    return 0.0 if b is None else b[1] - b[0]


@dataclass
class RunResult:
    strategy: str
    seed: int
    x0: np.ndarray
    x_c_star: np.ndarray | None
    x_f_star: np.ndarray | None
    responses: dict                   # "x0" / "x_c" / "x_f" -> Response
    features: dict                    # same keys -> FeatureSet
    cost: dict
    logs: dict                        # phase label -> list of iteration rows
    statuses: dict
    achieved_band: tuple | None
    in_band_max: float | None
    spec_met: bool
    init: InitResult | None = None
    error: str | None = None

    def to_record(self) -> dict:
        def vec(v):
            return None if v is None else [float(t) for t in v]

        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "x0": geometry.design_record(self.x0),
            "x_c_star": None if self.x_c_star is None else geometry.design_record(self.x_c_star),
            "x_f_star": None if self.x_f_star is None else geometry.design_record(self.x_f_star),
            "responses": {k: {"fidelity": r.fidelity, "freq_GHz": vec(r.freqs),
                              "S11_dB": vec(r.levels)} for k, r in self.responses.items()},
            "features": {k: F.to_record() for k, F in self.features.items()},
            "cost": self.cost,
            "statuses": self.statuses,
            "achieved_band": None if self.achieved_band is None else list(self.achieved_band),
            "in_band_max": self.in_band_max,
            "spec_met": self.spec_met,
            "init": None if self.init is None else {
                "alpha": self.init.alpha, "scale": self.init.scale,
                "n_tried": self.init.n_tried, "score": self.init.score},
            "logs": self.logs,
            "error": self.error,
        }


def _tr(x0, U, bounds, evaluate, ledger, *, rebuild, budget, cfg: RunConfig,
        F0: FeatureSet | None = None) -> TrustRegionState:
    config = TRConfig(rebuild=rebuild, budget=budget, fd=cfg.fd, secant=cfg.secant,
                      workers=cfg.parallel_workers)
    return tr_optimize(x0, U, bounds, evaluate, config, F0=F0, cost=ledger.total_cost)


def _bounds_for(cfg: RunConfig, x0) -> tuple[Bounds, np.ndarray]:
    C0 = float(x0[0])
    c_lo, c_hi = cfg.c_bounds if cfg.c_bounds is not None else (C0 - cfg.c_margin,
                                                                C0 + cfg.c_margin)
    bounds = geometry.build_bounds(x0, c_lo, c_hi)
    return bounds, bounds.clip(x0)


def run_variable_fidelity(cfg: RunConfig, simulator=None, *, ev: Evaluator | None = None) -> RunResult:
    """Initialize, tune on the low-fidelity model, refine on the high-fidelity model.

    A starting design whose response has no features in the tuning window
    cannot seed a surrogate; Strategy A then falls back to the next-ranked
    candidate. A featureless high-fidelity center keeps ``x_c*`` as the final
    design.
    """
    if cfg.strategy == BENCHMARK:
        raise ValueError("use benchmark() for the benchmark strategy")
    ev = ev or Evaluator(simulator)
    ledger = ev.ledger
    band = cfg.band
    sweep = cfg.narrow_sweep
    logs, statuses, feats = {}, {}, {}
    x_c = x_f = None
    error = None

    if cfg.strategy == BANDWIDTH_SPECIFIC:
        init = strategy_a_init(cfg, ev)
        window = (band.f_L, band.f_H)
        U = lambda F: u_bw_specific(F, band)  # noqa: E731
    else:
        init = strategy_b_init(cfg, ev)
        window = cfg.enhance_window
        stage2_band = replace(band, center_term=cfg.center_term)
        U = lambda F: u_stage2(F, stage2_band)  # noqa: E731
    x0_raw, r0 = init.x0, init.response
    bounds, x0 = _bounds_for(cfg, x0_raw)

    try:
        if cfg.strategy == BANDWIDTH_SPECIFIC:
            for rank, idx in enumerate(init.ranking()):
                x0_raw, r0 = init.candidates[idx], init.responses[idx]
                bounds, x0 = _bounds_for(cfg, x0_raw)
                F0 = extract(r0, window, band.S_t) if np.array_equal(x0, x0_raw) else None
                try:
                    st = _tr(x0, U, bounds, ev.features(sweep, LOW, window, band.S_t, LOW_TR),
                             ledger, rebuild=EVERY_ACCEPT, budget=cfg.budget_low, cfg=cfg, F0=F0)
                except DegenerateCenter:
                    log.info("candidate %d has no in-band features; trying the next", idx)
                    continue
                if rank:
                    statuses["init"] = f"fell back to candidate ranked {rank + 1}"
                break
            else:
                raise AllDegenerate("no candidate has features inside the band")
            logs["low"], statuses["low"] = st.log_rows(), st.status
        else:
            stage1_window = (band.f_L, band.f_H)
            x_c1, F1 = x0, None
            try:
                st1 = _tr(x0, lambda F: u_stage1(F, band), bounds,
                          ev.features(sweep, LOW, stage1_window, band.S_t, LOW_TR), ledger,
                          rebuild=EVERY_ACCEPT, budget=cfg.budget_low, cfg=cfg,
                          F0=extract(r0, stage1_window, band.S_t))
                logs["low_stage1"], statuses["low_stage1"] = st1.log_rows(), st1.status
                x_c1 = st1.x_best
                used = st1.n_sims
            except DegenerateCenter as exc:
                statuses["low_stage1"] = f"skipped: {exc}"
                used = 0
            r1 = ev.cached(x_c1, sweep, LOW) or r0
            F1 = extract(r1, window, band.S_t)
            st = _tr(x_c1, U, bounds, ev.features(sweep, LOW, window, band.S_t, LOW_TR), ledger,
                     rebuild=EVERY_ACCEPT, budget=max(cfg.budget_low - used, 1), cfg=cfg, F0=F1)
            logs["low_stage2"], statuses["low_stage2"] = st.log_rows(), st.status
        x_c = st.x_best
        feats["x_c"] = st.F_best

        high_eval = ev.features(sweep, HIGH, window, band.S_t, HIGH_TR)
        Fh = high_eval(x_c)
        try:
            sth = _tr(x_c, U, bounds, high_eval, ledger, rebuild=cfg.rebuild_high,
                      budget=cfg.budget_high - 1, cfg=cfg, F0=Fh)
            logs["high"], statuses["high"] = sth.log_rows(), sth.status
            x_f, feats["x_f"] = sth.x_best, sth.F_best
        except DegenerateCenter:
            statuses["high"] = "degenerate_center"
            x_f, feats["x_f"] = x_c, Fh
    except TopoAntError as exc:
        error = f"{type(exc).__name__}: {exc}"
        log.warning("run stopped early: %s", error)

    responses = {"x0": r0}
    if x_c is not None:
        responses["x_c"] = ev.cached(x_c, sweep, LOW) or r0
    if x_f is not None:
        responses["x_f"] = ev.cached(x_f, sweep, HIGH)
    final = responses.get("x_f")
    ab, ibm, ok = None, None, False
    if final is not None:
        ibm = classifier_score(final, band)
        if cfg.strategy == BANDWIDTH_SPECIFIC:
            ab = achieved_band(final, 0.5 * (band.f_L + band.f_H))
            ok = ibm <= SPEC_LEVEL_DB
        else:
            ab = achieved_band(final, band.f_0)
            ok = ab is not None
    feats["x0"] = extract(r0, (band.f_L, band.f_H), band.S_t)
    return RunResult(cfg.strategy, cfg.seed, x0, x_c, x_f, responses, feats,
                     cost=ledger.summary(), logs=logs, statuses=statuses,
                     achieved_band=ab, in_band_max=ibm, spec_met=bool(ok), init=init,
                     error=error)


BENCHMARK_COLUMNS = ("method", "n_low", "n_high", "total_rf", "total_rf_hours", "wall_time_s",
                     "u0_db", "spec_met", "note")

BENCHMARK_METHODS = ("(i)", "(ii)", "(iii)", "(iv)", "(v)", "variable-fidelity feature-based")


def benchmark(cfg: RunConfig, simulator=None, x0=None) -> list[dict]:
    """Run the six comparison methods from one shared starting design.

    The starting design comes from bandwidth-specific initialization unless
    ``x0`` is given; its cost is not charged to any method.
    """
    band = cfg.band
    sweep = cfg.narrow_sweep
    window = (band.f_L, band.f_H)
    if x0 is None:
        x0 = strategy_a_init(cfg, Evaluator(simulator)).x0
    bounds, x0 = _bounds_for(cfg, x0)
    U_mm = lambda F: u_minmax(F, band)  # noqa: E731
    U_ls = lambda F: u_least_squares(F, band)  # noqa: E731
    U_ft = lambda F: u_bw_specific(F, band)  # noqa: E731

    def high_only(U, samples):
        def run(ev):
            st = _tr(x0, U, bounds,
                     ev.features(sweep, HIGH, window, band.S_t, HIGH_TR, samples),
                     ev.ledger, rebuild=EVERY_ACCEPT, budget=cfg.budget_benchmark_high, cfg=cfg)
            return st.x_best, HIGH, ""
        return run

    def two_level(U, samples, gate_on_spec):
        def run(ev):
            st = _tr(x0, U, bounds,
                     ev.features(sweep, LOW, window, band.S_t, LOW_TR, samples),
                     ev.ledger, rebuild=EVERY_ACCEPT, budget=cfg.budget_low, cfg=cfg)
            x_c = st.x_best
            if gate_on_spec and classifier_score(ev.cached(x_c, sweep, LOW), band) > SPEC_LEVEL_DB:
                return x_c, LOW, "Optimized design violates the specification - R_f tuning not performed"
            sth = _tr(x_c, U, bounds,
                      ev.features(sweep, HIGH, window, band.S_t, HIGH_TR, samples),
                      ev.ledger, rebuild=cfg.rebuild_high, budget=cfg.budget_high, cfg=cfg)
            return sth.x_best, HIGH, ""
        return run

    methods = {
        "(i)": high_only(U_mm, True),
        "(ii)": high_only(U_ls, True),
        "(iii)": high_only(U_ft, False),
        "(iv)": two_level(U_mm, True, True),
        "(v)": two_level(U_ls, True, True),
        "variable-fidelity feature-based": two_level(U_ft, False, False),
    }
    rows = []
    for name in BENCHMARK_METHODS:
        ev = Evaluator(simulator)
        t0 = time.perf_counter()
        note, u0, met = "", math.nan, False
        try:
            x_end, fid, note = methods[name](ev)
            u0 = classifier_score(ev.cached(x_end, sweep, fid), band)
            met = fid == HIGH and u0 <= SPEC_LEVEL_DB
        except TopoAntError as exc:
            note = f"failed: {type(exc).__name__}: {exc}"
        led = ev.ledger
        total = led.total_cost()
        rows.append({
            "method": name,
            "n_low": led.n_low,
            "n_high": led.n_high,
            "total_rf": total,
            "total_rf_hours": total * T_HIGH_S / 3600.0,
            "wall_time_s": time.perf_counter() - t0,
            "u0_db": u0,
            "spec_met": met,
            "note": note,
        })
    return rows
