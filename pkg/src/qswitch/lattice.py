"""Uniform state-space lattice, quantizer, and relation-ball neighborhoods.

The lattice with parameter eta > 0 is the set of points q = k * s with
integer coordinate vectors k and per-axis spacing s = 2*eta/sqrt(n).  The
quantizer maps x to the unique lattice point whose half-open cell contains
it, so ||Q(x) - x|| <= eta for every x.  All set computations downstream run
on the integer coordinates k; floating point enters only through the
quantizer's floor (round half up toward +inf, per axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PrecisionError


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned closed box [lo, hi] in state space."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box is empty")

    def __eq__(self, other):
        return (
            isinstance(other, Box)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    @property
    def n(self) -> int:
        return self.lo.size

    def contains(self, x):
        """Membership of x (shape (..., n)); closed on both ends."""
        x = np.asarray(x, dtype=float)
        return ((x >= self.lo) & (x <= self.hi)).all(axis=-1)


@dataclass(frozen=True)
class Lattice:
    """Integer lattice over R^n with quantization radius eta."""

    n: int
    eta: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError("eta must be positive and finite")

    @property
    def spacing(self) -> float:
        """Per-axis spacing s = 2*eta/sqrt(n); the cell diagonal radius is eta."""
        return 2.0 * self.eta / math.sqrt(self.n)

    def quantize(self, x) -> np.ndarray:
        """Integer cell coordinates of x (shape (..., n)).

        k_i = floor(x_i/s + 1/2), i.e. the unique cell with
        center_i - s/2 <= x_i < center_i + s/2 on every axis.
        """
        x = np.asarray(x, dtype=float)
        return np.floor(x / self.spacing + 0.5).astype(np.int64)

    def center(self, k) -> np.ndarray:
        """Center point of cell(s) k."""
        return np.asarray(k, dtype=np.int64) * self.spacing


@dataclass(frozen=True, eq=False)
class CellRange:
    """Product of per-axis inclusive integer intervals [kmin_i, kmax_i]."""

    kmin: np.ndarray
    kmax: np.ndarray

    def __post_init__(self):
        kmin = np.atleast_1d(np.asarray(self.kmin, dtype=np.int64))
        kmax = np.atleast_1d(np.asarray(self.kmax, dtype=np.int64))
        object.__setattr__(self, "kmin", kmin)
        object.__setattr__(self, "kmax", kmax)
        if kmin.shape != kmax.shape or kmin.ndim != 1:
            raise ValueError("range bounds must be vectors of equal length")
        if np.any(kmax < kmin):
            raise ValueError("cell range is empty")

    def __eq__(self, other):
        return (
            isinstance(other, CellRange)
            and np.array_equal(self.kmin, other.kmin)
            and np.array_equal(self.kmax, other.kmax)
        )

    @property
    def n(self) -> int:
        return self.kmin.size

    @property
    def shape(self) -> tuple:
        return tuple((self.kmax - self.kmin + 1).tolist())

    @property
    def count(self) -> int:
        return int(math.prod(self.shape))

    def contains(self, k):
        k = np.asarray(k, dtype=np.int64)
        return ((k >= self.kmin) & (k <= self.kmax)).all(axis=-1)

    def issubset(self, other: "CellRange") -> bool:
        return bool(np.all(self.kmin >= other.kmin) and np.all(self.kmax <= other.kmax))

    def ravel(self, k) -> np.ndarray:
        """Row-major flat index of cell(s) k, which must lie in the range."""
        rel = np.asarray(k, dtype=np.int64) - self.kmin
        strides = np.ones(self.n, dtype=np.int64)
        shape = self.shape
        for i in range(self.n - 2, -1, -1):
            strides[i] = strides[i + 1] * shape[i + 1]
        return (rel * strides).sum(axis=-1)

    def unravel(self, idx) -> np.ndarray:
        """Inverse of ravel: flat index -> cell coordinates (..., n)."""
        coords = np.unravel_index(np.asarray(idx, dtype=np.int64), self.shape)
        return np.stack(coords, axis=-1) + self.kmin

    def all_cells(self) -> np.ndarray:
        """All cells as an (count, n) array in row-major order."""
        axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(self.kmin, self.kmax)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack(grid, axis=-1).reshape(-1, self.n)


def cell_range(lat: Lattice, box: Box) -> CellRange:
    """Integer-cell image of a box under the quantizer.

    Per axis the image is exactly [floor(lo/s + 1/2), floor(hi/s + 1/2)]:
    the quantizer is monotone and maps the box onto this product of
    intervals.
    """
    s = lat.spacing
    kmin = np.floor(box.lo / s + 0.5).astype(np.int64)
    kmax = np.floor(box.hi / s + 0.5).astype(np.int64)
    return CellRange(kmin, kmax)


def inner_cell_range(lat: Lattice, box: Box):
    """Cells whose entire half-open cell lies inside the box; None if there are none."""
    s = lat.spacing
    kmin = np.ceil(box.lo / s + 0.5).astype(np.int64)
    kmax = np.floor(box.hi / s - 0.5).astype(np.int64)
    if np.any(kmax < kmin):
        return None
    return CellRange(kmin, kmax)


def ball_offsets(lat: Lattice, radius: float) -> np.ndarray:
    """All integer offsets d with ||d * s|| <= radius, in lexicographic order.

    The threshold is applied to the integer squared length ||d||^2 against
    floor((radius/s)^2), so the result is reproducible bit-for-bit.  The
    zero offset is always included.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    s = lat.spacing
    r2_cells = math.floor((radius / s) ** 2)
    bound = math.isqrt(r2_cells) if r2_cells > 0 else 0
    axes = [np.arange(-bound, bound + 1, dtype=np.int64)] * lat.n
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lat.n)
    d2 = np.einsum("ij,ij->i", grid, grid)
    return grid[d2 <= r2_cells]


class RelationBall:
    """Offset table of the neighborhood {q' : V(q, q') <= alpha_lo(eps - eta)}.

    The neighborhood is translation-invariant on the lattice, so the offsets
    are computed once per (certificate, parameters) pair and reused for every
    cell.  Enumeration filters the Euclidean cover of radius eps - eta (sound
    because V >= alpha_lo(||.||) forces members within that distance).
    """

    def __init__(self, lat: Lattice, cert, params):
        if not params.epsilon > params.eta:
            raise PrecisionError("epsilon must exceed eta")
        self.lat = lat
        self.threshold = float(cert.alpha_lo(params.epsilon - params.eta))
        cover = ball_offsets(lat, params.epsilon - params.eta)
        vals = cert.V(np.zeros(lat.n), cover * lat.spacing)
        self.offsets = cover[vals <= self.threshold]
        d2 = np.einsum("ij,ij->i", self.offsets, self.offsets)
        self.r2_cells = int(d2.max())
        cover_d2 = np.einsum("ij,ij->i", cover, cover)
        # Euclidean iff the accepted set is exactly the integer ball d^2 <= r2.
        self.is_euclidean = len(self.offsets) == int((cover_d2 <= self.r2_cells).sum())

    def cells(self, q) -> np.ndarray:
        """All cells in the neighborhood of q, in lexicographic offset order."""
        return np.asarray(q, dtype=np.int64) + self.offsets


def rel_ball(lat: Lattice, cert, params, q) -> np.ndarray:
    """Cells q' with V(center(q), center(q')) <= alpha_lo(eps - eta).

    One-shot convenience wrapper; batch users should build a RelationBall
    once and call .cells() per query.
    """
    return RelationBall(lat, cert, params).cells(q)
