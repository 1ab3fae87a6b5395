"""Feature-based trust-region optimization with finite-difference surrogates.

Each iteration linearizes the extracted features around the current design
(forward finite differences), minimizes the objective of the predicted
features inside the intersection of the bounds and an infinity-norm box of
radius ``delta`` (normalized by the bound ranges), simulates the candidate and
updates the radius from the gain ratio.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateCenter
from .features import CLASSES, FeatureSet
from .geometry import Bounds

log = logging.getLogger(__name__)

RUNNING = "running"
CONVERGED_RADIUS = "converged_radius"
CONVERGED_STEP = "converged_step"
BUDGET_EXHAUSTED = "budget_exhausted"

EVERY_ACCEPT = "every_accept"
ONCE = "once"


@dataclass(frozen=True)
class FDPolicy:
    relative_step: float = 0.02
    absolute_floor: float = 0.01

    def __post_init__(self):
        if not (self.relative_step > 0 and self.absolute_floor > 0):
            raise ValueError("finite-difference steps must be positive")

    def steps(self, x, bounds: Bounds) -> np.ndarray:
        """Signed perturbation per parameter; flipped where +p would leave the box."""
        x = np.asarray(x, dtype=float)
        p = np.maximum(self.relative_step * np.abs(x), self.absolute_floor * bounds.span)
        p = np.minimum(p, 0.5 * bounds.span)
        return np.where(x + p > bounds.upper, -p, p)


def _match_class(f_ref, f_new, tol):
    """Pair reference and new frequencies one-to-one, nearest first, within ``tol``."""
    if f_ref.size == 0 or f_new.size == 0:
        return np.full(f_ref.size, -1)
    cost = np.abs(f_ref[:, None] - f_new[None, :])
    big = 1e9
    rows, cols = linear_sum_assignment(np.where(cost <= tol, cost, big))
    out = np.full(f_ref.size, -1)
    ok = cost[rows, cols] <= tol
    out[rows[ok]] = cols[ok]
    return out


def match_features(ref: FeatureSet, new: FeatureSet) -> np.ndarray:
    """Index into ``new.flat()`` for every feature of ``ref.flat()`` (-1 if unmatched).

    Features are matched within their class by nearest frequency; the gate is
    half the window width divided by the class count at the reference.
    """
    width = float(ref.window[1] - ref.window[0])
    out, off_ref, off_new = [], 0, 0
    for c in CLASSES:
        fr = getattr(ref, f"{c}_freq")
        fn = getattr(new, f"{c}_freq")
        tol = 0.5 * width / max(1, fr.size)
        m = _match_class(fr, fn, tol)
        out.append(np.where(m >= 0, m + off_new, -1))
        off_ref += fr.size
        off_new += fn.size
    return np.concatenate(out).astype(int) if out else np.zeros(0, dtype=int)


@dataclass
class LinearFeatureSurrogate:
    center: np.ndarray
    features0: FeatureSet
    J_omega: np.ndarray
    J_S: np.ndarray
    steps: np.ndarray | None = None

    def predict(self, x) -> FeatureSet:
        """First-order feature prediction; ``x`` may be (D,) or (n, D)."""
        dx = np.asarray(x, dtype=float) - self.center
        f0, s0, _ = self.features0.flat()
        return self.features0.with_flat(f0 + dx @ self.J_omega.T, s0 + dx @ self.J_S.T)


def _is_degenerate(F: FeatureSet) -> bool:
    return all(v == 0 for v in F.counts().values())


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def build_surrogate(x, evaluate: Callable[[np.ndarray], FeatureSet], bounds: Bounds,
                    policy: FDPolicy = FDPolicy(), *, center: FeatureSet | None = None,
                    workers: int = 1) -> LinearFeatureSurrogate:
    """Forward-difference feature Jacobians around ``x``.

    Costs ``D + 1`` evaluations, or ``D`` when the center features are given.
    Perturbed features are matched to the center features by class and nearest
    frequency; unmatched center features get zero sensitivity in that column.
    """
    x = np.asarray(x, dtype=float)
    F0 = evaluate(x) if center is None else center
    if _is_degenerate(F0):
        raise DegenerateCenter("no features inside the extraction window at the center design")
    p = policy.steps(x, bounds)
    D = x.size
    pert = [x + p[d] * np.eye(D)[d] for d in range(D)]
    Fs = _map(evaluate, pert, workers)
    f0, s0, _ = F0.flat()
    Jw = np.zeros((f0.size, D))
    Js = np.zeros((f0.size, D))
    for d, Fd in enumerate(Fs):
        idx = match_features(F0, Fd)
        fd, sd, _ = Fd.flat()
        ok = idx >= 0
        Jw[ok, d] = (fd[idx[ok]] - f0[ok]) / p[d]
        Js[ok, d] = (sd[idx[ok]] - s0[ok]) / p[d]
    return LinearFeatureSurrogate(x.copy(), F0, Jw, Js, p)


def secant_update(s: LinearFeatureSurrogate, x_new, F_new: FeatureSet,
                  bounds: Bounds) -> LinearFeatureSurrogate:
    """Re-center the surrogate at an accepted design with a rank-one Jacobian correction.

    The Broyden correction is computed in bound-normalized coordinates. Rows
    follow the features of ``F_new``; features without a counterpart at the old
    center start with zero sensitivity.
    """
    x_new = np.asarray(x_new, dtype=float)
    step = (x_new - s.center) / bounds.span
    ss = float(step @ step)
    f0, l0, _ = s.features0.flat()
    fn, ln, _ = F_new.flat()
    idx = match_features(s.features0, F_new)
    Jw, Js = s.J_omega.copy(), s.J_S.copy()
    if ss > 0:
        Jwz, Jsz = Jw * bounds.span, Js * bounds.span
        ok = idx >= 0
        yw = fn[idx[ok]] - f0[ok]
        ys = ln[idx[ok]] - l0[ok]
        Jwz[ok] += np.outer(yw - Jwz[ok] @ step, step) / ss
        Jsz[ok] += np.outer(ys - Jsz[ok] @ step, step) / ss
        Jw, Js = Jwz / bounds.span, Jsz / bounds.span
    Jw_new = np.zeros((fn.size, x_new.size))
    Js_new = np.zeros((fn.size, x_new.size))
    back = match_features(F_new, s.features0)
    ok = back >= 0
    Jw_new[ok] = Jw[back[ok]]
    Js_new[ok] = Js[back[ok]]
    return LinearFeatureSurrogate(x_new.copy(), F_new, Jw_new, Js_new, s.steps)


def radius_box(center, delta, bounds: Bounds):
    """Normalized-coordinate box ``[lo, hi]`` = bounds intersected with the radius."""
    zc = bounds.normalize(center)
    return np.maximum(0.0, zc - delta), np.minimum(1.0, zc + delta)


def solve_subproblem(s: LinearFeatureSurrogate, U, delta: float, bounds: Bounds, *,
                     n_starts: int = 16, tol: float = 1e-6, max_iter: int = 200,
                     fd_step: float = 1e-7, seed: int = 0) -> np.ndarray:
    """Minimize ``U(s.predict(x))`` over bounds intersected with the radius box.

    Multi-start projected descent in normalized coordinates: forward-difference
    gradients of the (cheap) surrogate objective and a backtracking line search
    with an Armijo test. A start stops once its step falls below ``tol``.
    Returns the center when nothing beats it.
    """
    zc = bounds.normalize(s.center)
    lo, hi = radius_box(s.center, float(delta), bounds)
    D = zc.size

    def f(Z):
        # objectives that ignore the batch still get one value per row
        return np.broadcast_to(np.asarray(U(s.predict(bounds.denormalize(Z))), dtype=float),
                               Z.shape[:-1]).copy()

    u_center = float(f(zc[None, :])[0])
    rng = np.random.default_rng(seed)
    Z = np.vstack([np.clip(zc, lo, hi), rng.uniform(lo, hi, size=(n_starts - 1, D))])
    fz = f(Z)
    active = np.ones(len(Z), dtype=bool)
    eye = np.eye(D) * fd_step
    width = float(np.max(hi - lo))
    ts = width * 0.5 ** np.arange(30)
    for _ in range(max_iter):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        Za = Z[ia]
        # probe inward at the upper face so gradients stay defined in the box
        sign = np.where(Za + fd_step > hi, -1.0, 1.0)
        probes = Za[:, None, :] + sign[:, None, :] * eye[None, :, :]
        fp = f(probes.reshape(-1, D)).reshape(ia.size, D)
        g = (fp - fz[ia, None]) / (sign * fd_step)
        gmax = np.max(np.abs(g), axis=1)
        dirn = -g / np.where(gmax > 0, gmax, 1.0)[:, None]
        trial = np.clip(Za[:, None, :] + ts[None, :, None] * dirn[:, None, :], lo, hi)
        ft = f(trial.reshape(-1, D)).reshape(ia.size, ts.size)
        decrease = np.einsum("id,itd->it", g, trial - Za[:, None, :])
        ok = ft <= fz[ia, None] + 1e-4 * decrease
        ok &= ft < fz[ia, None]
        for row, i in enumerate(ia):
            hits = np.flatnonzero(ok[row])
            if gmax[row] == 0 or hits.size == 0:
                active[i] = False
                continue
            j = hits[0]
            gain = fz[i] - ft[row, j]
            moved = float(np.max(np.abs(trial[row, j] - Za[row])))
            Z[i], fz[i] = trial[row, j], ft[row, j]
            if moved <= tol or gain <= 1e-12 * max(1.0, abs(fz[i])):
                active[i] = False
    best = int(np.argmin(fz))
    if not fz[best] < u_center:
        return s.center.copy()
    x = bounds.clip(bounds.denormalize(Z[best]))
    return x


def gain_ratio(U_true_new, U_true_old, U_model_new, U_model_old) -> float:
    """Actual over predicted objective change."""
    num = U_true_new - U_true_old
    den = U_model_new - U_model_old
    if den == 0:
        return math.inf if num < 0 else -math.inf
    return num / den


def update_radius(delta, rho):
    """Shrink by 3 on poor prediction, double on good prediction."""
    if rho < 0.25:
        return delta / 3
    if rho > 0.75:
        return 2 * delta
    return delta


@dataclass(frozen=True)
class TRConfig:
    rebuild: str = EVERY_ACCEPT
    budget: int | None = None        # max simulations in this run, center included
    eps: float = 1e-3
    delta0: float = 1.0
    max_iter: int = 500
    fd: FDPolicy = FDPolicy()
    secant: bool = True
    workers: int = 1
    n_starts: int = 16

    def __post_init__(self):
        if self.rebuild not in (EVERY_ACCEPT, ONCE):
            raise ValueError(f"unknown rebuild policy {self.rebuild!r}")


@dataclass
class IterRecord:
    iter: int
    delta: float
    rho: float
    U_true: float
    accepted: bool
    n_minima: int
    n_maxima: int
    cumulative_cost: float
    x: np.ndarray = field(repr=False, default=None)


LOG_COLUMNS = ("iter", "delta", "rho", "U_true", "accepted", "n_minima", "n_maxima",
               "cumulative_cost")


@dataclass
class TrustRegionState:
    x_best: np.ndarray
    U_best: float
    F_best: FeatureSet
    delta: float
    rho_gain: float = math.nan
    iteration: int = 0
    history: list = field(default_factory=list)
    status: str = RUNNING
    n_sims: int = 0
    n_builds: int = 0

    def apply_gain(self, rho: float) -> bool:
        """Radius update + accept/reject decision for one gain ratio."""
        self.rho_gain = rho
        self.delta = update_radius(self.delta, rho)
        return rho > 0

    @property
    def delta_trace(self) -> list:
        return [h.delta for h in self.history]

    def log_rows(self) -> list[dict]:
        return [{k: getattr(h, k) for k in LOG_COLUMNS} for h in self.history]


def tr_optimize(x0, U, bounds: Bounds, evaluate: Callable[[np.ndarray], FeatureSet],
                config: TRConfig = TRConfig(), *, F0: FeatureSet | None = None,
                cost: Callable[[], float] | None = None) -> TrustRegionState:
    """Trust-region minimization of ``U(evaluate(x))``.

    ``evaluate`` simulates a design and extracts its features; it is the only
    route to the simulator, so the number of calls is the simulation count.
    ``config.rebuild`` selects a fresh Jacobian after every accepted step or a
    single build reused (optionally secant-refreshed) for the whole run.
    """
    x = np.asarray(x0, dtype=float)
    if not bounds.contains(x, tol=1e-12):
        raise ValueError("x0 lies outside the bounds")
    x = bounds.clip(x)
    D = x.size
    n = {"sims": 0}
    cost = cost or (lambda: float(n["sims"]))

    def ev(z):
        n["sims"] += 1
        return evaluate(z)

    def room(k):
        return config.budget is None or n["sims"] + k <= config.budget

    if F0 is None:
        if not room(1):
            raise ValueError("budget too small to evaluate the starting design")
        F0 = ev(x)
    if _is_degenerate(F0):
        raise DegenerateCenter("no features inside the extraction window at x0")
    state = TrustRegionState(x_best=x.copy(), U_best=float(U(F0)), F_best=F0,
                             delta=config.delta0)

    def finish(status):
        state.status = status
        state.n_sims = n["sims"]
        log.debug("TR finished: %s after %d iterations, U=%.6g", status,
                  state.iteration, state.U_best)
        return state

    if not room(D):
        return finish(BUDGET_EXHAUSTED)
    s = build_surrogate(x, ev, bounds, config.fd, center=F0, workers=config.workers)
    state.n_builds = 1

    while True:
        if state.iteration >= config.max_iter:
            return finish(BUDGET_EXHAUSTED)
        x_new = solve_subproblem(s, U, state.delta, bounds, n_starts=config.n_starts,
                                 seed=state.iteration)
        step = float(np.max(np.abs(bounds.normalize(x_new) - bounds.normalize(state.x_best))))
        if step < config.eps:
            return finish(CONVERGED_STEP)
        if not room(1):
            return finish(BUDGET_EXHAUSTED)
        state.iteration += 1
        F_new = ev(x_new)
        U_new = float(U(F_new))
        U_model_new = float(U(s.predict(x_new)))
        U_model_old = float(U(s.predict(state.x_best)))
        rho = gain_ratio(U_new, state.U_best, U_model_new, U_model_old)
        accepted = state.apply_gain(rho)
        state.history.append(IterRecord(
            state.iteration, float(state.delta), float(rho), U_new, bool(accepted),
            F_new.n_minima, F_new.n_maxima, float(cost()), x_new.copy()))
        if accepted:
            state.x_best, state.U_best, state.F_best = x_new, U_new, F_new
            if _is_degenerate(F_new):
                return finish(CONVERGED_STEP)
            if config.rebuild == EVERY_ACCEPT:
                if not room(D):
                    return finish(BUDGET_EXHAUSTED)
                s = build_surrogate(x_new, ev, bounds, config.fd, center=F_new,
                                    workers=config.workers)
                state.n_builds += 1
            elif config.secant:
                s = secant_update(s, x_new, F_new, bounds)
        if state.delta < config.eps:
            return finish(CONVERGED_RADIUS)
