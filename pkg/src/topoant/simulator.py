"""Two-fidelity reflection responses and the simulation cost ledger.

The built-in mock is an analytic "modal" stand-in for a full-wave solver. A
patch's outline sets six resonances through its rms radius (circular-patch
mode constants) and its outline harmonics; the feed position sets how deep
each resonance is. Every resonance frequency and width is inversely
proportional to the sizing factor ``C`` while all other model quantities are
scale-free, so ``simulate(scale_design(x, c), f) == simulate(x, c * f)``.
"""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import NonMonotoneGrid, OutOfRange

C0_MM_GHZ = 299.792458
EPS_R = 2.55
MODE_CONSTANTS = (1.8412, 3.0542, 3.8317, 4.2012, 5.3176, 6.4156)

BASELINE_DB = -0.5
DEPTH_DB = 22.0
WIDTH_FRACTION = 0.04
SHAPE_PERTURBATION = 0.08

# feed position (fraction of the local outline radius) giving full coupling
_COUPLING_PEAK = np.array([0.55, 0.40, 0.25, 0.45, 0.30, 0.50])
_COUPLING_FLOOR = 0.9

# low-fidelity distortions
LOW_FREQ_SHIFT = 1.02
LOW_WIDTH_FACTOR = 1.10
LOW_DEPTH_FACTOR = 0.9
RIPPLE_DB = 0.3
RIPPLE_PERIOD_GHZ = 0.35
_RIPPLE_REF_C_MM = 30.0

T_LOW_S = 60.0
T_HIGH_S = 110.0

LOW = "low"
HIGH = "high"
FIDELITIES = (LOW, HIGH)


@dataclass(frozen=True)
class SweepSpec:
    f_start: float
    f_stop: float
    n_points: int

    def __post_init__(self):
        if not self.f_start < self.f_stop:
            raise ValueError(f"f_start ({self.f_start}) must be below f_stop ({self.f_stop})")
        if int(self.n_points) < 2:
            raise ValueError("a sweep needs at least 2 points")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def freqs(self) -> np.ndarray:
        return np.linspace(self.f_start, self.f_stop, self.n_points)

    @property
    def step(self) -> float:
        return (self.f_stop - self.f_start) / (self.n_points - 1)


@dataclass(frozen=True)
class Response:
    freqs: np.ndarray
    levels: np.ndarray
    fidelity: str = HIGH
    cost_units: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        s = np.asarray(self.levels, dtype=float)
        if f.ndim != 1 or f.shape != s.shape:
            raise ValueError("freqs and levels must be 1-D arrays of equal length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise NonMonotoneGrid("response frequencies must be strictly increasing")
        if not np.all(np.isfinite(s)):
            raise ValueError("response levels must be finite")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "levels", s)


@dataclass(frozen=True)
class MockModalModel:
    modes: np.ndarray           # (K, 3): f_k [GHz], w_k [GHz], d_k [dB]
    baseline: float = BASELINE_DB
    ripple_amp: float = 0.0
    ripple_period: float = RIPPLE_PERIOD_GHZ
    ripple_phase: float = 0.0

    def levels(self, freqs) -> np.ndarray:
        f = np.asarray(freqs, dtype=float)
        fk, wk, dk = self.modes.T
        u = (f[..., None] - fk) / wk
        s = self.baseline + np.sum(dk / (1.0 + u * u), axis=-1)
        if self.ripple_amp:
            s = s + self.ripple_amp * np.sin(2 * np.pi * f / self.ripple_period + self.ripple_phase)
        return np.minimum(s, 0.0)


@dataclass
class CostLedger:
    """Thread-safe simulation counter with per-phase attribution."""

    t_low: float = T_LOW_S
    t_high: float = T_HIGH_S
    n_low: int = 0
    n_high: int = 0
    by_phase: Counter = field(default_factory=Counter)
    seconds: Counter = field(default_factory=Counter)   # charged wall time per fidelity
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, fidelity: str, phase: str = "unassigned", count: int = 1,
               seconds: float | None = None) -> None:
        if fidelity not in FIDELITIES:
            raise ValueError(f"unknown fidelity {fidelity!r}")
        if seconds is None:
            seconds = count * (self.t_low if fidelity == LOW else self.t_high)
        with self._lock:
            self.seconds[fidelity] += seconds
            if fidelity == LOW:
                self.n_low += count
            else:
                self.n_high += count
            self.by_phase[(phase, fidelity)] += count

    def total_cost(self) -> float:
        return total_cost(self)

    def phase_counts(self) -> dict:
        with self._lock:
            return {f"{p}:{f}": n for (p, f), n in sorted(self.by_phase.items())}

    def summary(self) -> dict:
        return {
            "n_low": self.n_low,
            "n_high": self.n_high,
            "t_low": self.t_low,
            "t_high": self.t_high,
            "rf_equivalent": self.total_cost(),
            "seconds": {f: float(self.seconds[f]) for f in FIDELITIES},
            "phases": self.phase_counts(),
        }


def total_cost(ledger) -> float:
    """Simulation expense in units of one high-fidelity run."""
    return ledger.n_low * (ledger.t_low / ledger.t_high) + ledger.n_high


def radial_profile(rho, theta, angle: float) -> float:
    """Periodic piecewise-linear radial function rho(theta) evaluated at ``angle``."""
    a = float(angle) % (2 * np.pi)
    th = np.append(theta, 2 * np.pi)
    r = np.append(rho, rho[0])
    return float(np.interp(a, th, r))


def outline_harmonics(rho, theta, K: int = len(MODE_CONSTANTS)) -> np.ndarray:
    """Normalized magnitudes |c_k|/c_0 of rho(theta), k = 1..K (trapezoid weights)."""
    w = (np.roll(theta, -1) - np.roll(theta, 1)) % (2 * np.pi) / (4 * np.pi)
    c0 = np.sum(w * rho)
    k = np.arange(1, K + 1)[:, None]
    ck = np.sum(w * rho * np.exp(-1j * k * theta), axis=1)
    return np.abs(ck) / c0


def _shape_factor(r_k: np.ndarray) -> np.ndarray:
    return np.tanh(10.0 * r_k - 1.0)


def feed_coupling(u: float) -> np.ndarray:
    """Per-mode coupling in (0, 1] for a feed at fractional radius ``u``."""
    return _COUPLING_FLOOR + (1 - _COUPLING_FLOOR) * np.cos(np.pi * (u - _COUPLING_PEAK)) ** 2


_RIPPLE_WEIGHTS = np.random.default_rng(20240611).uniform(-1.0, 1.0, size=512)


def _ripple_phase(rho_f, rho, phi) -> float:
    # smooth, deterministic, scale-free design signature
    v = np.concatenate([[rho_f], rho, phi])
    w = np.resize(_RIPPLE_WEIGHTS, v.size)
    return float(np.pi * np.dot(w, v))


def modal_model(x, fidelity: str = HIGH) -> MockModalModel:
    """Resonance parameters of the mock model for design ``x``."""
    if fidelity not in FIDELITIES:
        raise ValueError(f"unknown fidelity {fidelity!r}")
    patch = geometry.decode(x)
    C, rho_f, phi_f, rho, phi = geometry.split(x)
    theta = patch.absolute_angles
    a = C * np.sqrt(np.mean(rho ** 2))
    chi = np.asarray(MODE_CONSTANTS)
    fk = chi * C0_MM_GHZ / (2 * np.pi * a * np.sqrt(EPS_R))
    fk = fk * (1 + SHAPE_PERTURBATION * _shape_factor(outline_harmonics(rho, theta)))
    u = rho_f / radial_profile(rho, theta, phi_f)
    dk = -DEPTH_DB * feed_coupling(u)
    wk = WIDTH_FRACTION * fk
    ripple = dict(ripple_amp=0.0)
    if fidelity == LOW:
        fk = fk * LOW_FREQ_SHIFT
        wk = wk * LOW_WIDTH_FACTOR
        dk = dk * LOW_DEPTH_FACTOR
        ripple = dict(
            ripple_amp=RIPPLE_DB,
            ripple_period=RIPPLE_PERIOD_GHZ * _RIPPLE_REF_C_MM / C,
            ripple_phase=_ripple_phase(rho_f, rho, phi),
        )
    order = np.argsort(fk)
    modes = np.column_stack([fk, wk, dk])[order]
    return MockModalModel(modes=modes, **ripple)


def simulate(x, sweep: SweepSpec, fidelity: str = HIGH, ledger: CostLedger | None = None,
             phase: str = "unassigned") -> Response:
    """Mock reflection response of ``x`` over ``sweep`` (dB)."""
    model = modal_model(x, fidelity)
    freqs = sweep.freqs
    cost = T_LOW_S if fidelity == LOW else T_HIGH_S
    if ledger is not None:
        ledger.record(fidelity, phase, seconds=cost)
    return Response(freqs, model.levels(freqs), fidelity, cost)


def resample(r: Response, new_freqs) -> Response:
    """Piecewise-linear interpolation of a response onto ``new_freqs``."""
    nf = np.asarray(new_freqs, dtype=float)
    span = r.freqs[0], r.freqs[-1]
    # tolerate float noise from products like alpha * f at the sweep ends
    tol = 1e-9 * max(abs(span[0]), abs(span[1]), 1.0)
    if nf.size and (nf.min() < span[0] - tol or nf.max() > span[1] + tol):
        raise OutOfRange(
            f"target frequencies [{nf.min():.6g}, {nf.max():.6g}] GHz outside "
            f"simulated span [{span[0]:.6g}, {span[1]:.6g}] GHz")
    nf_c = np.clip(nf, span[0], span[1])
    return Response(nf, np.interp(nf_c, r.freqs, r.levels), r.fidelity, 0.0)


class MockSimulator:
    """Callable wrapper used by the pipeline; mirrors the external adapter API."""

    name = "mock"

    def __call__(self, x, sweep: SweepSpec, fidelity: str) -> Response:
        return simulate(x, sweep, fidelity)
