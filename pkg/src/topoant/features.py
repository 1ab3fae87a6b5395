"""Feature-point representation of a sampled reflection response.

A response is summarized by (frequency, level) pairs of three kinds inside a
frequency window: local minima, interior local maxima and crossings of a level
threshold. Feature counts change from design to design, so every consumer
works with variable-length arrays.

Arrays in a :class:`FeatureSet` may carry leading batch dimensions (the
trust-region surrogate predicts features for many designs at once); the last
axis always indexes features within a class.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyResponse, WindowTooNarrow
from .simulator import Response

CLASSES = ("min", "max", "cross", "samp")


def _empty():
    return np.zeros(0)


@dataclass(frozen=True)
class FeatureSet:
    min_freq: np.ndarray = field(default_factory=_empty)
    min_level: np.ndarray = field(default_factory=_empty)
    max_freq: np.ndarray = field(default_factory=_empty)
    max_level: np.ndarray = field(default_factory=_empty)
    cross_freq: np.ndarray = field(default_factory=_empty)
    cross_level: np.ndarray = field(default_factory=_empty)
    # raw in-window samples, only filled for response-level objectives
    samp_freq: np.ndarray = field(default_factory=_empty)
    samp_level: np.ndarray = field(default_factory=_empty)
    window: tuple = (np.nan, np.nan)
    threshold: float = np.nan
    crossings_fallback: bool = False
    window_max: float = np.nan

    @property
    def minima(self) -> np.ndarray:
        return np.stack([self.min_freq, self.min_level], axis=-1)

    @property
    def maxima(self) -> np.ndarray:
        return np.stack([self.max_freq, self.max_level], axis=-1)

    @property
    def crossings(self) -> np.ndarray:
        return np.stack([self.cross_freq, self.cross_level], axis=-1)

    @property
    def n_minima(self) -> int:
        return self.min_freq.shape[-1]

    @property
    def n_maxima(self) -> int:
        return self.max_freq.shape[-1]

    @property
    def n_crossings(self) -> int:
        return self.cross_freq.shape[-1]

    def counts(self) -> dict:
        return {c: getattr(self, f"{c}_freq").shape[-1] for c in CLASSES}

    def flat(self):
        """Concatenate all classes: (freqs, levels, class_labels)."""
        freqs = np.concatenate([getattr(self, f"{c}_freq") for c in CLASSES], axis=-1)
        levels = np.concatenate([getattr(self, f"{c}_level") for c in CLASSES], axis=-1)
        tags = np.concatenate([np.full(getattr(self, f"{c}_freq").shape[-1], c) for c in CLASSES])
        return freqs, levels, tags

    def with_flat(self, freqs, levels) -> "FeatureSet":
        """Same layout, new values (``freqs``/``levels`` may add batch dims)."""
        out, i = {}, 0
        for c in CLASSES:
            n = getattr(self, f"{c}_freq").shape[-1]
            out[f"{c}_freq"] = freqs[..., i:i + n]
            out[f"{c}_level"] = levels[..., i:i + n]
            i += n
        return replace(self, **out)

    def to_record(self) -> dict:
        rec = {
            "window": [float(v) for v in self.window],
            "threshold": float(self.threshold),
            "crossings_fallback": bool(self.crossings_fallback),
        }
        for name in ("minima", "maxima", "crossings"):
            rec[name] = [[float(a), float(b)] for a, b in getattr(self, name)]
        return rec


def _strict_extrema(levels: np.ndarray):
    """Interior strict extrema of a sequence, plateaus collapsed.

    Returns ``(kind, start, stop)`` triples where ``levels[start:stop]`` is the
    (possibly single-sample) run forming the extremum; ``kind`` is -1 for a
    minimum and +1 for a maximum. Runs touching either end are not reported.
    """
    n = len(levels)
    starts = np.flatnonzero(np.r_[True, levels[1:] != levels[:-1]])
    stops = np.r_[starts[1:], n]
    runs = levels[starts]
    out = []
    for j in range(1, len(runs) - 1):
        left, mid, right = runs[j - 1], runs[j], runs[j + 1]
        if mid < left and mid < right:
            out.append((-1, starts[j], stops[j]))
        elif mid > left and mid > right:
            out.append((1, starts[j], stops[j]))
    return out


def _refine(f: np.ndarray, s: np.ndarray, i: int):
    """Three-point parabolic vertex around sample ``i`` (uniform spacing)."""
    y0, y1, y2 = s[i - 1], s[i], s[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return f[i], y1
    p = 0.5 * (y0 - y2) / denom
    h = 0.5 * (f[i + 1] - f[i - 1])
    return f[i] + p * h, y1 - 0.25 * (y0 - y2) * p


def threshold_crossings(f: np.ndarray, s: np.ndarray, threshold: float) -> np.ndarray:
    """Linearly interpolated frequencies where ``s`` passes ``threshold``."""
    above = s > threshold
    idx = np.flatnonzero(above[1:] != above[:-1])
    s0, s1 = s[idx], s[idx + 1]
    t = (threshold - s0) / (s1 - s0)
    return f[idx] + t * (f[idx + 1] - f[idx])


def extract(r: Response, window, threshold: float = -10.0, *, refine: bool = True,
            include_samples: bool = False) -> FeatureSet:
    """Minima, interior maxima and threshold crossings of ``r`` inside ``window``.

    Extrema are interior samples where the first difference changes sign
    (flat runs count once, at their midpoint) and are optionally refined to
    sub-grid accuracy with a parabola through the neighbouring samples. If the
    threshold is never crossed, the minima stand in for the crossings.
    """
    if r.freqs.size == 0:
        raise EmptyResponse("response has no samples")
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise WindowTooNarrow(f"window [{lo}, {hi}] is empty")
    sel = (r.freqs >= lo) & (r.freqs <= hi)
    if np.count_nonzero(sel) < 3:
        raise WindowTooNarrow(
            f"window [{lo}, {hi}] GHz holds {np.count_nonzero(sel)} samples; at least 3 needed")
    f, s = r.freqs[sel], r.levels[sel]

    mins, maxs = [], []
    for kind, a, b in _strict_extrema(s):
        if b - a == 1 and refine:
            pt = _refine(f, s, a)
        else:
            pt = (0.5 * (f[a] + f[b - 1]), s[a])
        (mins if kind < 0 else maxs).append(pt)
    mins = np.array(mins, dtype=float).reshape(-1, 2)
    maxs = np.array(maxs, dtype=float).reshape(-1, 2)

    cf = threshold_crossings(f, s, threshold)
    fallback = cf.size == 0
    if fallback:
        cross = mins.copy()
    else:
        cross = np.column_stack([cf, np.full(cf.size, float(threshold))])

    samples = np.column_stack([f, s]) if include_samples else np.zeros((0, 2))
    return FeatureSet(
        min_freq=mins[:, 0], min_level=mins[:, 1],
        max_freq=maxs[:, 0], max_level=maxs[:, 1],
        cross_freq=cross[:, 0], cross_level=cross[:, 1],
        samp_freq=samples[:, 0], samp_level=samples[:, 1],
        window=(lo, hi), threshold=float(threshold),
        crossings_fallback=fallback, window_max=float(s.max()),
    )
