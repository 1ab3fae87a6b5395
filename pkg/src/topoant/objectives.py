"""Scalar objectives and candidate classifiers.

Feature-based objectives accept a :class:`~topoant.features.FeatureSet` whose
arrays may carry leading batch dimensions; they then return an array of
objective values (one per batch entry) instead of a float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BandNotCovered
from .features import FeatureSet
from .simulator import Response, resample

PENALTY = 1e6


@dataclass(frozen=True)
class BandSpec:
    f_L: float
    f_H: float
    S_t: float = -10.0
    f_0: float | None = None
    S_max: float = -10.0
    beta: float = 100.0
    beta1: float = 10.0
    penalty: float = PENALTY
    # "literal": middle-minimum frequency; "centered": its distance to f_0
    center_term: str = "literal"

    def __post_init__(self):
        if not self.f_L < self.f_H:
            raise ValueError(f"f_L ({self.f_L}) must be below f_H ({self.f_H})")
        if self.f_0 is not None and not self.f_L <= self.f_0 <= self.f_H:
            raise ValueError(f"f_0 ({self.f_0}) must lie in [f_L, f_H]")
        if not (self.beta > 0 and self.beta1 > 0):
            raise ValueError("beta and beta1 must be positive")
        if self.center_term not in ("literal", "centered"):
            raise ValueError(f"unknown center_term {self.center_term!r}")


def _out(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def _batch_shape(F: FeatureSet):
    return np.shape(F.min_freq)[:-1]


def _in_band(r: Response, band: BandSpec) -> np.ndarray:
    if r.freqs.size == 0 or band.f_L < r.freqs[0] or band.f_H > r.freqs[-1]:
        raise BandNotCovered(
            f"band [{band.f_L}, {band.f_H}] GHz not covered by the response span")
    sel = (r.freqs >= band.f_L) & (r.freqs <= band.f_H)
    if not sel.any():
        raise BandNotCovered("no response samples inside the band")
    return r.levels[sel]


def classifier_score(r: Response, band: BandSpec) -> float:
    """Largest in-band reflection level (dB); lower ranks better."""
    return float(np.max(_in_band(r, band)))


def u_minmax(r, band: BandSpec):
    """Worst in-band reflection; accepts a Response or a sampled FeatureSet."""
    if isinstance(r, FeatureSet):
        sel = (r.samp_freq >= band.f_L) & (r.samp_freq <= band.f_H)
        return _out(np.max(np.where(sel, r.samp_level, -np.inf), axis=-1))
    return classifier_score(r, band)


def u_least_squares(r, band: BandSpec):
    """Mean squared exceedance of in-band levels over ``S_t``."""
    if isinstance(r, FeatureSet):
        sel = (r.samp_freq >= band.f_L) & (r.samp_freq <= band.f_H)
        ex = np.where(sel, np.maximum(r.samp_level - band.S_t, 0.0), 0.0)
        return _out(np.sum(ex ** 2, axis=-1) / np.count_nonzero(sel, axis=-1))
    levels = _in_band(r, band)
    return float(np.mean(np.maximum(levels - band.S_t, 0.0) ** 2))


def target_frequencies(Q: int, band: BandSpec) -> np.ndarray:
    """Evenly spaced targets for ``Q`` minima spanning the band."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    if Q == 1:
        return np.array([0.5 * (band.f_L + band.f_H)])
    return band.f_L + (band.f_H - band.f_L) / (Q - 1) * np.arange(Q)


def _infeasible(F: FeatureSet, band: BandSpec):
    return _out(np.full(_batch_shape(F), band.penalty + F.window_max))


def u_bw_specific(F: FeatureSet, band: BandSpec):
    """Squared maxima exceedance over ``S_t`` plus beta * distance of minima to targets."""
    Q = F.n_minima
    if Q == 0:
        return _infeasible(F, band)
    level = np.sum(np.maximum(F.max_level - band.S_t, 0.0) ** 2, axis=-1)
    spread = np.linalg.norm(F.min_freq - target_frequencies(Q, band), axis=-1)
    return _out(level + band.beta * spread)


def u_stage1(F: FeatureSet, band: BandSpec):
    """Distance of minima frequencies to the evenly spaced in-band targets."""
    Q = F.n_minima
    if Q == 0:
        return _infeasible(F, band)
    return _out(np.linalg.norm(F.min_freq - target_frequencies(Q, band), axis=-1))


def middle_index(Q: int) -> int:
    """0-based index of the middle minimum (1-based floor((Q-1)/2) + 1)."""
    return (Q - 1) // 2


def u_stage2(F: FeatureSet, band: BandSpec):
    """Bandwidth-enhancement objective around ``f_0``.

    Middle-minimum term, plus beta1 times the exceedance of the largest interior
    maximum over ``S_t``, minus the smaller distance from ``f_0`` to the outer
    threshold crossings.
    """
    if band.f_0 is None:
        raise ValueError("u_stage2 needs f_0")
    Q = F.n_minima
    if Q == 0 or F.n_crossings == 0:
        return _infeasible(F, band)
    mid = F.min_freq[..., middle_index(Q)]
    if band.center_term == "centered":
        mid = np.abs(mid - band.f_0)
    if F.n_maxima:
        level = band.beta1 * np.maximum(np.max(F.max_level, axis=-1) - band.S_t, 0.0)
    else:
        level = 0.0
    w3 = F.cross_freq
    B = np.minimum(np.abs(band.f_0 - w3[..., 0]), np.abs(w3[..., -1] - band.f_0))
    return _out(mid + level - B)


def scaled_exceedance(r_broad: Response, band: BandSpec, alpha: float, n_band: int = 201) -> float:
    """Uc(alpha): in-band maximum of the response read at alpha*f, minus S_max."""
    fb = np.linspace(band.f_L, band.f_H, n_band)
    return float(np.max(resample(r_broad, alpha * fb).levels)) - band.S_max


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_alpha(r_broad: Response, band: BandSpec, alpha_range, *, n_grid: int = 101,
                   n_band: int = 201, rel_tol: float = 1e-4):
    """Frequency scale that best places the broad response into the band.

    Grid scan over ``alpha_range`` followed by golden-section refinement in the
    bracket around the best grid point. Returns ``(alpha_star, Uc_star)``.
    """
    lo, hi = float(alpha_range[0]), float(alpha_range[1])
    if not (0 < lo <= hi):
        raise ValueError(f"invalid alpha range {alpha_range!r}")
    uc = lambda a: scaled_exceedance(r_broad, band, a, n_band)  # noqa: E731
    uc(lo), uc(hi)  # surfaces OutOfRange for the whole range up front
    if lo == hi:
        return lo, uc(lo)
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([uc(a) for a in grid])
    i = int(np.argmin(vals))
    best_a, best_v = float(grid[i]), float(vals[i])
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = uc(c), uc(d)
    while (b - a) > rel_tol * best_a:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = uc(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = uc(d)
    for cand, val in ((c, fc), (d, fd)):
        if val < best_v:
            best_a, best_v = float(cand), float(val)
    return best_a, best_v
