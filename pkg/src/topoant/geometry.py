"""Free-form patch encoding in a cylindrical coordinate system.

A design vector is a flat float array ``x = [C, rho_f, phi_f, rho_1..rho_L,
phi_1..phi_L]`` with ``D = 2L + 3`` entries. ``C`` is a sizing factor in mm;
every other entry is unit-less (``phi_f`` in radians). Vertex angles are
recovered from the relative increments ``phi`` by a normalized prefix sum, so
any strictly positive increment vector produces a simple star-shaped outline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateOutline,
    EnclosureFailure,
    InfeasibleBounds,
    NonPositiveIncrement,
)

# fixed feed/substrate dimensions (mm)
OFFSET_MM = 5.0
R1_MM = 1.27
R2_MM = 2.84

RHO_RANGE = (0.1, 0.9)
PHI_RANGE = (0.01, 0.8)

CLIP_TOL = 1e-6
_COINCIDENT_TOL = 1e-9


def n_points(x) -> int:
    """Number of outline points ``L`` encoded by a design vector."""
    d = len(x)
    if d < 9 or (d - 3) % 2:
        raise ValueError(f"design vector length {d} is not 2L+3 with L >= 3")
    return (d - 3) // 2


def split(x):
    """Return ``(C, rho_f, phi_f, rho, phi)`` views of a design vector."""
    x = np.asarray(x, dtype=float)
    L = n_points(x)
    return x[0], x[1], x[2], x[3:3 + L], x[3 + L:]


def assemble(C, rho_f, phi_f, rho, phi) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if rho.shape != phi.shape:
        raise ValueError("rho and phi must have the same length")
    return np.concatenate([[C, rho_f, phi_f], rho, phi]).astype(float)


def labels(L: int) -> list[str]:
    return (["C", "rho_f", "phi_f"]
            + [f"rho_{i + 1}" for i in range(L)]
            + [f"phi_{i + 1}" for i in range(L)])


def design_record(x) -> dict:
    """Serializable record ``{"L", "x", "labels"}`` of a design vector."""
    L = n_points(x)
    return {"L": L, "x": [float(v) for v in x], "labels": labels(L)}


def from_record(record: dict) -> np.ndarray:
    x = np.asarray(record["x"], dtype=float)
    if n_points(x) != int(record["L"]):
        raise ValueError("record L does not match vector length")
    return x


@dataclass(frozen=True)
class DecodedPatch:
    vertices: np.ndarray        # (L, 2) mm
    feed_point: np.ndarray      # (2,) mm
    substrate_side: float       # A = B, mm
    absolute_angles: np.ndarray  # (L,) radians in [0, 2*pi)


def absolute_angles(phi) -> np.ndarray:
    """Vertex angles from relative increments.

    The first vertex sits at angle 0; vertex ``l`` sits at the prefix sum of
    the first ``l-1`` increments, normalized so the full sum maps to 2*pi. The
    last increment closes the outline back to the first vertex.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(~(phi > 0)):
        bad = int(np.flatnonzero(~(phi > 0))[0])
        raise NonPositiveIncrement(
            f"angular increment phi_{bad + 1} = {phi[bad]!r} must be > 0")
    cum = np.concatenate([[0.0], np.cumsum(phi)[:-1]])
    return 2.0 * np.pi * cum / phi.sum()


def decode(x) -> DecodedPatch:
    C, rho_f, phi_f, rho, phi = split(x)
    theta = absolute_angles(phi)
    r = C * rho
    vertices = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    edges = np.roll(vertices, -1, axis=0) - vertices
    if np.any(np.hypot(edges[:, 0], edges[:, 1]) <= _COINCIDENT_TOL):
        raise DegenerateOutline("consecutive outline vertices coincide")
    feed = np.array([C * rho_f * math.cos(phi_f), C * rho_f * math.sin(phi_f)])
    side = 2.0 * (C * float(np.max(rho)) + OFFSET_MM)
    return DecodedPatch(vertices, feed, side, theta)


def scale_design(x, c: float) -> np.ndarray:
    """Uniformly scale the geometry by ``c`` (only the sizing factor changes)."""
    if not c > 0:
        raise ValueError(f"scale factor must be positive, got {c!r}")
    y = np.array(x, dtype=float, copy=True)
    y[0] *= c
    return y


def point_in_polygon(point, vertices) -> bool:
    """Even-odd ray casting test (points exactly on an edge are ambiguous)."""
    px, py = float(point[0]), float(point[1])
    xs, ys = vertices[:, 0], vertices[:, 1]
    xn, yn = np.roll(xs, -1), np.roll(ys, -1)
    straddle = (ys > py) != (yn > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = xs + (py - ys) * (xn - xs) / (yn - ys)
    return bool(np.count_nonzero(straddle & (px < x_cross)) % 2)


def edge_distance(point, vertices) -> float:
    """Smallest distance from ``point`` to any polygon edge."""
    p = np.asarray(point, dtype=float)
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    ab = b - a
    t = np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    nearest = a + t[:, None] * ab
    return float(np.min(np.hypot(*(p - nearest).T)))


def contains_feed(patch: DecodedPatch, margin: float = R2_MM) -> bool:
    """True iff the feed is inside the outline with ``margin`` mm edge clearance."""
    if not point_in_polygon(patch.feed_point, patch.vertices):
        return False
    return edge_distance(patch.feed_point, patch.vertices) >= margin


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be 1-D vectors of equal length")
        if np.any(~(lo < hi)):
            raise ValueError("lower bounds must be strictly below upper bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.span

    def denormalize(self, z) -> np.ndarray:
        return self.lower + np.asarray(z, dtype=float) * self.span


def generation_bounds(L: int, c_range=(25.0, 35.0), rho_f_max: float = 0.5) -> Bounds:
    """Sampling box for fresh candidates."""
    lower = assemble(c_range[0], 0.0, 0.0, np.full(L, RHO_RANGE[0]), np.full(L, PHI_RANGE[0]))
    upper = assemble(c_range[1], rho_f_max, 2 * np.pi,
                     np.full(L, RHO_RANGE[1]), np.full(L, PHI_RANGE[1]))
    return Bounds(lower, upper)


def generate_candidate(L: int, seed, gen_bounds: Bounds | None = None, *,
                       margin: float = R2_MM, retries: int = 50,
                       outline_draws: int = 20) -> np.ndarray:
    """Draw a random decodable design whose feed is enclosed by the outline.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`. Every
    coordinate is sampled uniformly inside ``gen_bounds``. When the feed does
    not clear the outline edges by ``margin`` mm, only the feed coordinates are
    resampled, up to ``retries`` times. An outline that admits no feed within
    that budget is redrawn (at most ``outline_draws`` outlines in total).
    """
    if L < 3:
        raise ValueError("L must be >= 3")
    if gen_bounds is None:
        gen_bounds = generation_bounds(L)
    lo, hi = gen_bounds.lower, gen_bounds.upper
    if len(lo) != 2 * L + 3:
        raise ValueError("generation bounds do not match L")
    rng = np.random.default_rng(seed)
    for _ in range(outline_draws):
        x = rng.uniform(lo, hi)
        patch = decode(x)
        for _ in range(retries):
            if contains_feed(patch, margin):
                return x
            x[1:3] = rng.uniform(lo[1:3], hi[1:3])
            patch = decode(x)
    raise EnclosureFailure(
        f"no enclosed feed found after {outline_draws} outlines x {retries} feed resamples")


def build_bounds(x0, c_low: float, c_high: float, *, clip_tol: float = CLIP_TOL) -> Bounds:
    """Optimization box built around a selected starting design."""
    if not c_low < c_high:
        raise InfeasibleBounds(f"c_low={c_low} must be below c_high={c_high}")
    C, rho_f, phi_f, rho, phi = split(x0)
    decode(x0)
    L = len(rho)
    lower = assemble(c_low, 0.0, phi_f - np.pi, np.full(L, RHO_RANGE[0]), np.full(L, PHI_RANGE[0]))
    upper = assemble(c_high, float(np.max(rho)), phi_f + np.pi,
                     np.full(L, RHO_RANGE[1]), np.full(L, PHI_RANGE[1]))
    x0 = np.asarray(x0, dtype=float)
    excess = np.maximum(lower - x0, 0.0) + np.maximum(x0 - upper, 0.0)
    if np.any(excess > clip_tol):
        i = int(np.argmax(excess))
        raise InfeasibleBounds(
            f"x0[{i}] ({labels(L)[i]}) = {x0[i]:.6g} lies outside "
            f"[{lower[i]:.6g}, {upper[i]:.6g}]")
    return Bounds(lower, upper)


def polygon_rows(x) -> list[tuple[float, float]]:
    """Outline vertices (mm) in drawing order, for polygon CSV export."""
    return [(float(px), float(py)) for px, py in decode(x).vertices]
