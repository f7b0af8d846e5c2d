"""Parameter-space bookkeeping: non-resonance filters and box atlases.

Parameters live in nested collections of axis-aligned boxes; each refinement
level paves the surviving boxes with children of a prescribed size and drops
those failing a non-resonance predicate sampled at the center and the 2^d
corners.  Frequency maps are vectorized: a predicate takes an (m, d) array of
parameter points and returns a boolean mask, so exhaustive k-scans run as
single matrix products.

Norm conventions: the scan range is |k|_inf <= N while the lower bounds use
gamma |k|_1^{-tau} (with |k| replaced by 1 at k = 0 for the Melnikov
divisors).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


def nominal_half_width(A: float, size_exponent: int, level: int) -> float:
    return 0.5 * A ** -(level ** size_exponent)


def k_modes(d: int, N: int, include_zero: bool = False) -> np.ndarray:
    axes = np.meshgrid(*[np.arange(-N, N + 1)] * d, indexing="ij")
    ks = np.stack([a.ravel() for a in axes], axis=-1)
    if not include_zero:
        ks = ks[np.abs(ks).max(axis=1) > 0]
    return ks


# ----------------------------------------------------------------------
# non-resonance scans
# ----------------------------------------------------------------------

@dataclass
class ScanReport:
    ok: bool
    worst: tuple | None      # offending (k,) or (j, k) or ((j1, j2), k)
    margin: float            # min over the scan of |divisor| - bound

    def __bool__(self):
        return self.ok


def diophantine_ok(omega, N: int, gamma: float, tau: float) -> ScanReport:
    """|<k, omega>| > gamma |k|_1^{-tau} for all 0 < |k|_inf <= N,
    by exhaustive scan."""
    omega = np.asarray(omega, dtype=float)
    if N < 1:
        raise ValueError("N >= 1 required")
    ks = k_modes(omega.size, N)
    vals = np.abs(ks @ omega)
    bounds = gamma * np.abs(ks).sum(axis=1) ** -float(tau)
    margins = vals - bounds
    i = int(np.argmin(margins))
    return ScanReport(ok=bool((margins > 0).all()),
                      worst=tuple(int(c) for c in ks[i]),
                      margin=float(margins[i]))


def melnikov1_ok(omega, Omega, N: int, gamma: float, tau: float,
                 doubled: bool = False) -> ScanReport:
    """First Melnikov condition |<k, omega> + Omega_j| > gamma |k|_1^{-tau}
    over |k|_inf <= N (k = 0 included, |k| read as 1 there); with
    doubled=True the divisor uses Omega_{j1} + Omega_{j2} instead."""
    omega = np.asarray(omega, dtype=float)
    Omega = np.asarray(Omega, dtype=float)
    if (Omega <= 0).any():
        raise ValueError("normal frequencies must be positive")
    ks = k_modes(omega.size, N, include_zero=True)
    knorm = np.maximum(np.abs(ks).sum(axis=1), 1)
    bounds = gamma * knorm ** -float(tau)
    kw = ks @ omega
    if doubled:
        labels = [(j1, j2) for j1 in range(Omega.size)
                  for j2 in range(j1, Omega.size)]
        sums = np.array([Omega[a] + Omega[b] for a, b in labels])
    else:
        labels = list(range(Omega.size))
        sums = Omega
    vals = np.abs(kw[:, None] + sums[None, :])        # (nk, nj)
    margins = vals - bounds[:, None]
    i, j = np.unravel_index(int(np.argmin(margins)), margins.shape)
    return ScanReport(ok=bool((margins > 0).all()),
                      worst=(labels[j], tuple(int(c) for c in ks[i])),
                      margin=float(margins[i, j]))


def nonresonance_predicate(Omega, N: int, gamma: float, tau: float,
                           omega_of=None):
    """Vectorized predicate: a point passes when its frequency vector meets
    the Diophantine condition and the plain and doubled Melnikov conditions.
    `omega_of` maps an (m, d) array of parameters to frequency vectors;
    default identity."""
    Omega = np.asarray(Omega, dtype=float)
    pairs = np.array([Omega[a] + Omega[b] for a in range(Omega.size)
                      for b in range(a, Omega.size)])
    shifts = np.concatenate([Omega, pairs])

    def predicate(xi: np.ndarray) -> np.ndarray:
        om = xi if omega_of is None else omega_of(xi)
        d = om.shape[1]
        ks = k_modes(d, N, include_zero=True)
        knz = np.abs(ks).max(axis=1) > 0
        kn1 = np.maximum(np.abs(ks).sum(axis=1), 1)
        bounds = gamma * kn1 ** -float(tau)
        kw = om @ ks.T                                  # (m, nk)
        ok = (np.abs(kw[:, knz]) > bounds[knz][None, :]).all(axis=1)
        for s in shifts:
            ok &= (np.abs(kw + s) > bounds[None, :]).all(axis=1)
        return ok

    return predicate


# ----------------------------------------------------------------------
# boxes and atlases
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterBox:
    center: tuple
    half_width: float
    level: int

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return (2.0 * self.half_width) ** self.d

    def corners(self) -> np.ndarray:
        signs = np.array(list(itertools.product((-1.0, 1.0),
                                                repeat=self.d)))
        return np.asarray(self.center) + self.half_width * signs

    def sample_points(self) -> np.ndarray:
        return np.vstack([np.asarray(self.center)[None, :], self.corners()])

    def contains(self, point, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(np.asarray(point)
                                  - np.asarray(self.center))
                           <= self.half_width + tol))


@dataclass
class ParameterAtlas:
    level: int
    A: float
    size_exponent: int
    boxes: list
    parents: list = field(default_factory=list)   # parallel; None at root

    @classmethod
    def root(cls, center, half_width: float = 0.5, A: float = 10.0,
             size_exponent: int = 4) -> "ParameterAtlas":
        box = ParameterBox(tuple(float(c) for c in center),
                           float(half_width), 0)
        return cls(level=0, A=A, size_exponent=size_exponent,
                   boxes=[box], parents=[None])

    def total_volume(self) -> float:
        return float(sum(b.volume for b in self.boxes))

    def validate(self, tol: float = 1e-12):
        for i, a in enumerate(self.boxes):
            for b in self.boxes[i + 1:]:
                gap = np.abs(np.asarray(a.center) - np.asarray(b.center))
                if np.all(gap < a.half_width + b.half_width - tol):
                    raise ValueError(f"boxes overlap: {a} / {b}")
        if self.level > 0:
            for box, parent in zip(self.boxes, self.parents):
                if parent is None or not parent.contains(
                        box.center, tol=parent.half_width * 1e-9):
                    raise ValueError(f"box {box} lacks a containing parent")

    def serialize_rows(self) -> list:
        rows = [(b.level, *b.center, b.half_width)
                for b in sorted(self.boxes, key=lambda b: b.center)]
        return rows


def pave_and_filter(atlas: ParameterAtlas, next_level: int, predicate
                    ) -> tuple:
    """Tile each surviving box with children of the next-level size, keep a
    child iff the predicate passes at its center and all corners, and return
    the refined atlas together with the removed-measure estimate."""
    if next_level <= atlas.level:
        raise ValueError("next_level must exceed the current level")
    target = nominal_half_width(atlas.A, atlas.size_exponent, next_level)
    children, parents = [], []
    removed = 0.0
    for box in atlas.boxes:
        d = box.d
        per_axis = max(1, round(box.half_width / target))
        h = box.half_width / per_axis
        axis = (2 * np.arange(per_axis) + 1) * h - box.half_width
        grids = np.meshgrid(*[axis] * d, indexing="ij")
        centers = np.asarray(box.center) \
            + np.stack([g.ravel() for g in grids], axis=-1)
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
        offs = np.vstack([np.zeros((1, d)), h * signs])
        pts = centers[:, None, :] + offs[None, :, :]
        ok = predicate(pts.reshape(-1, d)).reshape(len(centers),
                                                   offs.shape[0]).all(axis=1)
        removed += float((~ok).sum()) * (2.0 * h) ** d
        for c in centers[ok]:
            children.append(ParameterBox(tuple(float(v) for v in c),
                                         float(h), next_level))
            parents.append(box)
    out = ParameterAtlas(level=next_level, A=atlas.A,
                         size_exponent=atlas.size_exponent,
                         boxes=children, parents=parents)
    return out, removed


def measure_fraction(atlas_l: ParameterAtlas,
                     atlas_0: ParameterAtlas) -> float:
    v0 = atlas_0.total_volume()
    if v0 <= 0:
        raise ValueError("reference atlas has zero volume")
    return atlas_l.total_volume() / v0


def monte_carlo_excluded(predicate, box: ParameterBox, n: int, rng,
                         chunk: int = 65536) -> tuple:
    """Monte-Carlo estimate of the excluded fraction of a box, with the
    binomial standard error as the resolution bar."""
    bad = 0
    left = n
    c = np.asarray(box.center)
    while left > 0:
        m = min(chunk, left)
        pts = c + box.half_width * (2 * rng.random((m, box.d)) - 1)
        bad += int((~predicate(pts)).sum())
        left -= m
    frac = bad / n
    err = float(np.sqrt(max(frac * (1 - frac), 1.0 / n) / n))
    return frac, err
