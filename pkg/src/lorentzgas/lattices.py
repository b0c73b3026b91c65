"""Lattice bases, bounded-region point enumeration, and scatterer geometry.

Row-vector convention throughout: a lattice basis is a square matrix whose
*rows* generate the lattice, so the point with integer coefficients ``n``
is ``n @ basis + shift``.  All regions are open sets; boundary points are
never reported as members.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Protocol

import numpy as np

from .util import BudgetError, DomainError

DEFAULT_BUDGET = 10**8

# Chunk size (number of candidate coefficient vectors processed per batch)
# for the reference enumerator.  Keeps peak memory modest even when the
# caller allows a large budget.
_CHUNK = 1 << 18


class Region(Protocol):
    """Anything with an axis-aligned bounding box and a membership test."""

    def bounding_box(self) -> np.ndarray:
        """Return a (d, 2) array of [lower, upper] bounds per coordinate."""
        ...

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Vectorized strict membership test for an (n, d) array of points."""
        ...


def _as_float_array(x, shape_hint: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{shape_hint} must be finite, got {arr!r}")
    return arr


@dataclass(frozen=True, eq=False)
class LatticeBasis:
    """An affine lattice ``{n @ basis + shift : n in Z^d}`` with 2 <= d <= 4."""

    basis: np.ndarray
    shift: np.ndarray | None = None

    def __post_init__(self) -> None:
        b = _as_float_array(self.basis, "basis")
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise DomainError(f"basis must be square, got shape {b.shape}")
        d = b.shape[0]
        if not 2 <= d <= 4:
            raise DomainError(f"dimension must be in [2, 4], got {d}")
        if self.shift is None:
            s = np.zeros(d)
        else:
            s = _as_float_array(self.shift, "shift")
            if s.shape != (d,):
                raise DomainError(f"shift must have shape ({d},), got {s.shape}")
        det = float(np.linalg.det(b))
        if det == 0.0 or not math.isfinite(det):
            raise DomainError("basis rows are linearly dependent")
        b.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "shift", s)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def covolume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.linalg.inv(self.basis)
        inv.setflags(write=False)
        return inv

    def points_from_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        """Map integer coefficient rows to lattice points."""
        return coeffs @ self.basis + self.shift


@dataclass(frozen=True, eq=False)
class Box:
    """Open axis-aligned box, mainly useful for tests and volume sampling."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = _as_float_array(self.lower, "lower")
        hi = _as_float_array(self.upper, "upper")
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError("lower/upper must be 1-d arrays of equal length")
        if np.any(lo >= hi):
            raise DomainError("need lower < upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def bounding_box(self) -> np.ndarray:
        return np.stack([self.lower, self.upper], axis=1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all((points > self.lower) & (points < self.upper), axis=1)


@dataclass(frozen=True, eq=False)
class Cylinder:
    """Open cylinder along the first axis.

    Membership: ``x1_min < x[0] < x1_max`` and ``|x[1:] - center| < radius``.
    ``center`` has length d-1 and fixes the ambient dimension.
    """

    x1_min: float
    x1_max: float
    radius: float
    center: np.ndarray

    def __post_init__(self) -> None:
        c = _as_float_array(self.center, "center")
        if c.ndim != 1 or not 1 <= c.shape[0] <= 3:
            raise DomainError(f"center must be a 1-d array of length 1..3, got {c.shape}")
        if not (self.x1_min < self.x1_max):
            raise DomainError("need x1_min < x1_max")
        if not (self.radius > 0):
            raise DomainError("need radius > 0")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return 1 + self.center.shape[0]

    def bounding_box(self) -> np.ndarray:
        lo = np.concatenate([[self.x1_min], self.center - self.radius])
        hi = np.concatenate([[self.x1_max], self.center + self.radius])
        return np.stack([lo, hi], axis=1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        perp = points[:, 1:] - self.center
        return (
            (points[:, 0] > self.x1_min)
            & (points[:, 0] < self.x1_max)
            & (np.einsum("ij,ij->i", perp, perp) < self.radius**2)
        )


@dataclass(frozen=True, eq=False)
class CutParaboloid:
    """Open paraboloid region, translated and cut by a half-space.

    With P = { u : u[0] > u[1]^2 + ... + u[d-1]^2 - 1 }, the region is
    ``{ x : x + offset in P  and  x . cut_normal < 0 }``.  Bounded exactly
    when the first component of ``cut_normal`` is positive, which is
    therefore required.
    """

    offset: np.ndarray
    cut_normal: np.ndarray

    def __post_init__(self) -> None:
        y = _as_float_array(self.offset, "offset")
        h = _as_float_array(self.cut_normal, "cut_normal")
        if y.ndim != 1 or not 2 <= y.shape[0] <= 4:
            raise DomainError(f"offset must be a 1-d array of length 2..4, got {y.shape}")
        if h.shape != y.shape:
            raise DomainError("offset and cut_normal must have the same length")
        if not h[0] > 0:
            raise DomainError("cut_normal[0] must be positive (otherwise the region is unbounded)")
        y.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "offset", y)
        object.__setattr__(self, "cut_normal", h)

    @property
    def dim(self) -> int:
        return self.offset.shape[0]

    def contains(self, points: np.ndarray) -> np.ndarray:
        u = points + self.offset
        inside_p = u[:, 0] > np.einsum("ij,ij->i", u[:, 1:], u[:, 1:]) - 1.0
        return inside_p & (points @ self.cut_normal < 0.0)

    def bounding_box(self) -> np.ndarray:
        # In u = x + offset coordinates the region is
        #   u0 > |u_perp|^2 - 1   and   u . h < offset . h =: c.
        # Eliminating u0 gives a ball for u_perp (complete the square), from
        # which exact coordinate bounds follow.
        y, h = self.offset, self.cut_normal
        d = self.dim
        c = float(y @ h)
        h0 = float(h[0])
        hp = h[1:]
        ctr = -hp / (2.0 * h0)
        r2 = 1.0 + c / h0 + float(hp @ hp) / (4.0 * h0**2)
        if r2 <= 0.0:
            return np.zeros((d, 2))
        r = math.sqrt(r2)
        perp_lo, perp_hi = ctr - r, ctr + r
        nrm = float(np.linalg.norm(ctr))
        min_perp_sq = max(0.0, nrm - r) ** 2
        u0_lo = min_perp_sq - 1.0
        u0_hi = (c - float(hp @ ctr) + float(np.linalg.norm(hp)) * r) / h0
        lo = np.concatenate([[u0_lo], perp_lo]) - y
        hi = np.concatenate([[u0_hi], perp_hi]) - y
        return np.stack([lo, hi], axis=1)


def rotation_about_z(angle: float) -> np.ndarray:
    """3x3 rotation about the third axis (row-vector convention)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_x(angle: float) -> np.ndarray:
    """3x3 rotation about the first axis (row-vector convention)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def rotation_2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s], [-s, c]])


def fixed_rotation_3d() -> np.ndarray:
    """The reference orientation used by the deterministic 3-d runs."""
    return rotation_about_z(0.5) @ rotation_about_x(1.0) @ rotation_about_z(1.5)


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation (determinant +1) in the given dimension."""
    from scipy.stats import special_ortho_group

    return special_ortho_group.rvs(dim, random_state=rng)


def _is_prime(p: int) -> bool:
    from sympy import isprime

    return bool(isprime(p))


class HeckeCosets:
    """Integer coset representatives of index p (p prime) in dimension 2 or 3.

    Each representative T is an integer matrix with determinant p; the
    rescaled lattices ``p**(-1/d) * (T @ rotation)`` all have covolume one.
    There are p + 1 representatives for d = 2 and 1 + p + p^2 for d = 3.
    """

    def __init__(self, dim: int, p: int):
        if dim not in (2, 3):
            raise DomainError(f"dim must be 2 or 3, got {dim}")
        if p < 2 or not _is_prime(p):
            raise DomainError(f"p must be prime, got {p}")
        self.dim = dim
        self.p = p

    def __len__(self) -> int:
        p = self.p
        return p + 1 if self.dim == 2 else 1 + p + p * p

    @property
    def count(self) -> int:
        return len(self)

    def matrix(self, index: int) -> np.ndarray:
        """Representative number ``index`` (0-based, stable ordering)."""
        p = self.p
        if not 0 <= index < len(self):
            raise DomainError(f"index {index} out of range [0, {len(self)})")
        if self.dim == 2:
            if index == 0:
                return np.array([[p, 0], [0, 1]], dtype=np.int64)
            a = index - 1
            return np.array([[1, a], [0, p]], dtype=np.int64)
        if index == 0:
            return np.array([[p, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.int64)
        if index <= p:
            a = index - 1
            return np.array([[1, a, 0], [0, p, 0], [0, 0, 1]], dtype=np.int64)
        a, b = divmod(index - (p + 1), p)
        return np.array([[1, 0, a], [0, 1, b], [0, 0, p]], dtype=np.int64)

    def __iter__(self) -> Iterator[np.ndarray]:
        for i in range(len(self)):
            yield self.matrix(i)


def _int_det(t: np.ndarray) -> int:
    m = [[int(x) for x in row] for row in t]
    if len(m) == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def hecke_lattice(
    t: np.ndarray,
    p: int,
    rotation: np.ndarray | None = None,
    shift: np.ndarray | None = None,
) -> LatticeBasis:
    """Unit-covolume lattice ``p**(-1/d) * (T @ rotation)`` from a coset rep."""
    t = np.asarray(t)
    d = t.shape[0]
    if t.shape != (d, d) or not np.issubdtype(t.dtype, np.integer):
        raise DomainError("t must be a square integer matrix")
    if _int_det(t) != p:
        raise DomainError(f"determinant of t must equal p={p}, got {_int_det(t)}")
    if rotation is None:
        rotation = np.eye(d)
    basis = p ** (-1.0 / d) * (t.astype(float) @ rotation)
    return LatticeBasis(basis, shift)


def torus_points(m: int, x0) -> np.ndarray:
    """The m^d shifted grid points (x0 + j/m) mod 1, lexicographic in j."""
    x0 = _as_float_array(x0, "x0")
    if x0.ndim != 1:
        raise DomainError("x0 must be a 1-d array")
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    d = x0.shape[0]
    axes = [np.arange(m, dtype=float) / m] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return np.mod(x0 + grid, 1.0)


def _coefficient_ranges(lattice: LatticeBasis, region: Region) -> tuple[np.ndarray, np.ndarray]:
    """Integer coefficient bounds covering the region's bounding box."""
    bbox = np.asarray(region.bounding_box(), dtype=float)
    d = lattice.dim
    if bbox.shape != (d, 2):
        raise DomainError(f"region bounding box must be ({d}, 2), got {bbox.shape}")
    corners = np.array(list(itertools.product(*bbox))) - lattice.shift
    coeff_corners = corners @ lattice.inverse
    eps = 1e-9
    lo = np.ceil(coeff_corners.min(axis=0) - eps).astype(np.int64)
    hi = np.floor(coeff_corners.max(axis=0) + eps).astype(np.int64)
    return lo, hi


def _candidate_chunks(
    lattice: LatticeBasis, region: Region, budget: int
) -> Iterator[np.ndarray]:
    """Yield chunks of lattice points covering the region's bounding box."""
    lo, hi = _coefficient_ranges(lattice, region)
    spans = hi - lo + 1
    if np.any(spans <= 0):
        return
    total = 1
    for s in spans:
        total *= int(s)
    if total > budget:
        raise BudgetError(
            f"enumeration needs {total} candidate points, budget is {budget}"
        )
    d = lattice.dim
    tail_axes = [np.arange(lo[i], hi[i] + 1, dtype=np.int64) for i in range(1, d)]
    tail = np.stack(np.meshgrid(*tail_axes, indexing="ij"), axis=-1).reshape(-1, d - 1)
    rows_per_n0 = tail.shape[0]
    step = max(1, _CHUNK // max(1, rows_per_n0))
    for n0 in range(int(lo[0]), int(hi[0]) + 1, step):
        n0s = np.arange(n0, min(n0 + step, int(hi[0]) + 1), dtype=np.int64)
        coeffs = np.empty((len(n0s) * rows_per_n0, d), dtype=np.int64)
        coeffs[:, 0] = np.repeat(n0s, rows_per_n0)
        coeffs[:, 1:] = np.tile(tail, (len(n0s), 1))
        yield lattice.points_from_coefficients(coeffs)


def enumerate_points(
    lattice: LatticeBasis, region: Region, budget: int = DEFAULT_BUDGET
) -> np.ndarray:
    """All lattice points strictly inside the region.

    Raises BudgetError when the candidate coefficient box would exceed
    ``budget`` points.  Returns an (n, d) array (possibly with n = 0).
    """
    found = []
    for pts in _candidate_chunks(lattice, region, budget):
        mask = region.contains(pts)
        if np.any(mask):
            found.append(pts[mask])
    if not found:
        return np.empty((0, lattice.dim))
    return np.concatenate(found, axis=0)


def is_disjoint(
    lattice: LatticeBasis, region: Region, budget: int = DEFAULT_BUDGET
) -> bool:
    """True when the lattice has no point strictly inside the region."""
    for pts in _candidate_chunks(lattice, region, budget):
        if np.any(region.contains(pts)):
            return False
    return True


def free_path_alpha(
    lattice: LatticeBasis,
    center,
    radius: float,
    cap: float,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Smallest first coordinate of a lattice point in an open forward tube.

    The tube is ``{ 0 < x[0] < cap, |x[1:] - center| < radius }``.  Points
    with x[0] == 0 (the tube base, including the origin for an unshifted
    lattice) are excluded by openness.  Returns math.inf when the tube is
    empty of lattice points, meaning the free path is >= cap.
    """
    if not cap > 0:
        raise DomainError(f"cap must be positive, got {cap}")
    tube = Cylinder(0.0, cap, radius, np.asarray(center, dtype=float))
    pts = enumerate_points(lattice, tube, budget)
    if pts.shape[0] == 0:
        return math.inf
    return float(pts[:, 0].min())
