"""Large path-length asymptotics for the three aggregate curves.

The inverse-square tail of phi (and the inverse-cube tail of phibar0) is
controlled by the probability that a random lattice of covolume v avoids an
open paraboloid region cut by a half-space.  This module provides

* ``AvoidanceQuery`` (one or two such regions sharing a cut normal) together
  with a Monte Carlo estimator over randomly rotated prime-index sublattice
  cosets,
* ``ParabolaMap``, the two-parameter affine family mapping the standard
  paraboloid region onto itself, which reduces any admissible offset pair to
  a normalized one,
* ``AvoidanceCache``, a persistent table of single-region avoidance
  probabilities on a (sigma, log2 v) grid with bilinear lookup,
* quadratures turning cached avoidance values into the tail profile
  densities, plus the closed-form tail coefficients themselves.

Estimates use the same per-index counter-based streams as the curve
samplers, so every figure here is reproducible from (p, n, seed) alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _fast
from .lattices import CutParaboloid, _is_prime
from .util import CoverageError, DomainError, unit_ball_volume, zeta

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    """Finalizer of the splitmix64 generator (python-side twin)."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def _cell_seed(master: int, i: int, j: int) -> int:
    """Deterministic per-cell seed, a function of global indices only.

    Extending a table therefore never reshuffles cells that already exist.
    """
    key = ((i & 0xFFFFFFFF) << 32) | ((j + 0x8000) & 0xFFFFFFFF)
    return _mix64(_mix64(master + 0x9E3779B97F4A7C15) ^ _mix64(key)) >> 1


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")
    return value


# ---------------------------------------------------------------------------
# Closed-form tail coefficients and support endpoints


def phi_tail_coefficient(d: int) -> float:
    """Coefficient C with phi(xi) ~ C * xi^-2 as xi -> infinity."""
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    return math.pi ** ((d - 1) / 2) / (2.0**d * d * math.gamma((d + 3) / 2) * zeta(d))


def phi_tail(xi: float, d: int = 3) -> float:
    """Leading inverse-square tail of the stationary path density."""
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    return phi_tail_coefficient(d) * xi**-2


def phibar0_tail_coefficient(d: int) -> float:
    """Coefficient C with phibar0(xi) ~ C * xi^-3 as xi -> infinity.

    Consistent with the phi tail: 2 * phi_tail_coefficient(d) equals
    unit_ball_volume(d - 1) * phibar0_tail_coefficient(d).
    """
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    return 2.0 ** (2 - d) / (d * (d + 1) * zeta(d))


def phibar0_tail(xi: float, d: int = 3) -> float:
    """Leading inverse-cube tail of the between-collisions density."""
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    return phibar0_tail_coefficient(d) * xi**-3


_PHI0_ENDPOINTS = {2: 1.0, 3: 2.0 / math.sqrt(3.0), 4: math.sqrt(2.0)}


def phi0_support_endpoint(d: int) -> float:
    """Upper end of the support of phi0 (longest path off a scatterer).

    Known in closed form only for d in {2, 3, 4}; for d >= 5 only two-sided
    bounds are available, so the request is refused rather than guessed.
    """
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    if d not in _PHI0_ENDPOINTS:
        raise DomainError(
            f"no closed-form support endpoint for d = {d}; only two-sided "
            "bounds are known for d >= 5"
        )
    return _PHI0_ENDPOINTS[d]


# ---------------------------------------------------------------------------
# Affine self-maps of the paraboloid region


@dataclass(frozen=True)
class ParabolaMap:
    """Affine map x -> x @ matrix + translation preserving the region family.

    With P = {u : u[0] > u[1]^2 - 1}, the map with parameters (alpha, beta),
    alpha != 0, sends the closure of P onto itself.  Determinant alpha^3.
    """

    alpha: float
    beta: float = 0.0

    def __post_init__(self) -> None:
        a = _check_finite("alpha", self.alpha)
        b = _check_finite("beta", self.beta)
        if a == 0.0:
            raise DomainError("alpha must be nonzero")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def identity(cls) -> "ParabolaMap":
        return cls(1.0, 0.0)

    def matrix(self) -> np.ndarray:
        a, b = self.alpha, self.beta
        return np.array([[a * a, 0.0], [2.0 * a * b, a]])

    def translation(self) -> np.ndarray:
        a, b = self.alpha, self.beta
        return np.array([a * a + b * b - 1.0, b])

    @property
    def determinant(self) -> float:
        return self.alpha**3

    def apply(self, points) -> np.ndarray:
        """Image of one point (shape (2,)) or a batch (shape (n, 2))."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix() + self.translation()

    def then(self, other: "ParabolaMap") -> "ParabolaMap":
        """The composite map: apply self first, then other."""
        return ParabolaMap(
            self.alpha * other.alpha, self.beta * other.alpha + other.beta
        )

    def inverse(self) -> "ParabolaMap":
        return ParabolaMap(1.0 / self.alpha, -self.beta / self.alpha)


# ---------------------------------------------------------------------------
# Avoidance queries and their Monte Carlo estimator


@dataclass(frozen=True)
class AvoidanceQuery:
    """One or two open cut-paraboloid regions sharing a cut normal.

    Each offset y places a region { x : x + y in P, x . h < 0 } with
    P = {u : u[0] > u[1]^2 - 1}.  ``covolume`` is the covolume of the random
    lattice the query will be evaluated against.
    """

    offsets: tuple[tuple[float, float], ...]
    cut_normal: tuple[float, float]
    covolume: float

    def __post_init__(self) -> None:
        offs = tuple(
            (_check_finite("offset[0]", y[0]), _check_finite("offset[1]", y[1]))
            for y in self.offsets
        )
        if len(offs) not in (1, 2):
            raise DomainError(f"need 1 or 2 offsets, got {len(offs)}")
        h = (
            _check_finite("cut_normal[0]", self.cut_normal[0]),
            _check_finite("cut_normal[1]", self.cut_normal[1]),
        )
        if not h[0] > 0:
            raise DomainError(f"cut_normal[0] must be positive, got {h[0]}")
        v = _check_finite("covolume", self.covolume)
        if not v > 0:
            raise DomainError(f"covolume must be positive, got {v}")
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "cut_normal", h)
        object.__setattr__(self, "covolume", v)

    @classmethod
    def single(cls, sigma: float, v: float) -> "AvoidanceQuery":
        """One region at offset zero with cut normal (1, sigma), sigma >= 0."""
        sigma = _check_finite("sigma", sigma)
        if sigma < 0:
            raise DomainError(f"sigma must be >= 0, got {sigma}")
        return cls(((0.0, 0.0),), (1.0, sigma), v)

    @classmethod
    def pair(cls, y, y_prime, h, v: float) -> "AvoidanceQuery":
        """Two regions at offsets y and y_prime with a shared cut normal."""
        return cls(
            ((float(y[0]), float(y[1])), (float(y_prime[0]), float(y_prime[1]))),
            (float(h[0]), float(h[1])),
            v,
        )

    @classmethod
    def normalized(cls, a: float, b: float, h, v: float) -> "AvoidanceQuery":
        """Pair with first offset 0 and second offset (a^2 + b^2 - 1, b)."""
        a = _check_finite("a", a)
        b = _check_finite("b", b)
        if not a > 0:
            raise DomainError(f"a must be positive, got {a}")
        return cls.pair((0.0, 0.0), (a * a + b * b - 1.0, b), h, v)

    @property
    def n_regions(self) -> int:
        return len(self.offsets)

    def regions(self) -> tuple[CutParaboloid, ...]:
        h = np.array(self.cut_normal)
        return tuple(CutParaboloid(np.array(y), h) for y in self.offsets)


def transform_query(query: AvoidanceQuery, pmap: ParabolaMap) -> AvoidanceQuery:
    """Push a query through a ParabolaMap.

    Offsets move by the affine map, the cut normal by the inverse-transpose
    of its linear part, and the covolume picks up |det|.  The avoidance
    probability is invariant under this rewrite.
    """
    minv_t = np.linalg.inv(pmap.matrix()).T
    h = np.array(query.cut_normal) @ minv_t
    offs = tuple(tuple(pmap.apply(np.array(y))) for y in query.offsets)
    return AvoidanceQuery(offs, tuple(h), query.covolume * abs(pmap.determinant))


def normalize_offsets(y, y_prime) -> tuple[float, float, ParabolaMap]:
    """Reduce an offset pair to normalized coordinates (a, b).

    Returns (a, b, pmap) with pmap mapping offsets (0, 0) and
    (a^2 + b^2 - 1, b) onto y and y_prime.  Both inputs must lie strictly
    inside the closed region gauge 1 + u[0] - u[1]^2 > 0.
    """
    y = np.asarray(y, dtype=float)
    yp = np.asarray(y_prime, dtype=float)
    g = 1.0 + y[0] - y[1] ** 2
    gp = 1.0 + yp[0] - yp[1] ** 2
    if not g > 0:
        raise DomainError(f"first offset has nonpositive gauge {g}")
    if not gp > 0:
        raise DomainError(f"second offset has nonpositive gauge {gp}")
    alpha = math.sqrt(g)
    beta = float(y[1])
    a = math.sqrt(gp) / alpha
    b = (float(yp[1]) - beta) / alpha
    return a, b, ParabolaMap(alpha, beta)


def avoidance_estimate(
    query: AvoidanceQuery, n: int, *, p: int = 10007, seed: int = 0
) -> tuple[float, float]:
    """Probability that a random covolume-v lattice misses all query regions.

    Averages an exact per-lattice indicator over n randomly rotated
    prime-index sublattice cosets.  Returns (estimate, stderr).
    """
    if not isinstance(n, int) or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not _is_prime(p):
        raise DomainError(f"p must be prime, got {p}")
    if not isinstance(seed, int) or seed < 0:
        raise DomainError(f"seed must be a nonnegative integer, got {seed}")
    y1 = query.offsets[0]
    y2 = query.offsets[1] if query.n_regions == 2 else (0.0, 0.0)
    hx, hy = query.cut_normal
    cnt = _fast.xi_avoid_count(
        y1[0], y1[1], y2[0], y2[1], query.n_regions, hx, hy,
        query.covolume, p, 0, n, seed,
    )
    frac = float(cnt) / n
    return frac, math.sqrt(frac * (1.0 - frac) / n)


# ---------------------------------------------------------------------------
# Region volumes


def cut_region_volume(sigma: float) -> float:
    """Exact area of the single-region template with cut normal (1, sigma)."""
    sigma = _check_finite("sigma", sigma)
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    return (sigma * sigma + 4.0) ** 1.5 / 6.0


def region_volume_mc(region, n: int, seed: int = 0) -> tuple[float, float]:
    """Rejection Monte Carlo volume of any region exposing contains() and
    bounding_box().  Returns (volume, stderr)."""
    if not isinstance(n, int) or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    box = np.asarray(region.bounding_box(), dtype=float)
    widths = box[:, 1] - box[:, 0]
    if np.any(widths < 0):
        raise DomainError("bounding box has negative extent")
    box_vol = float(np.prod(widths))
    if box_vol == 0.0:
        return 0.0, 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = box[:, 0] + rng.random((n, box.shape[0])) * widths
    frac = float(np.count_nonzero(region.contains(pts))) / n
    return box_vol * frac, box_vol * math.sqrt(frac * (1.0 - frac) / n)


def avoidance_offset_integral(
    x1_max: float = 20.0,
    *,
    n_outer: int = 20000,
    n_inner: int = 250,
    p: int = 4999,
    seed: int = 0,
) -> tuple[float, float]:
    """Truncated integral of the avoidance probability over region offsets.

    Integrates the single-region avoidance probability at covolume 1, cut
    normal (1, 0), over all offsets inside the paraboloid with first
    coordinate below x1_max.  The full integral equals 1; the truncated
    value approaches it from below as x1_max grows and sits a few percent
    under 1 at the default height 20.  Returns (value, stderr).
    """
    x1_max = _check_finite("x1_max", x1_max)
    if not x1_max > 0:
        raise DomainError(f"x1_max must be positive, got {x1_max}")
    if not _is_prime(p):
        raise DomainError(f"p must be prime, got {p}")
    mean, sumsq = _fast.paraboloid_norm_mc(x1_max, n_outer, n_inner, p, seed)
    var = max(sumsq / n_outer - mean * mean, 0.0) / n_outer
    return mean, math.sqrt(var)


# ---------------------------------------------------------------------------
# Cached single-region avoidance table


class AvoidanceCache:
    """Single-region avoidance probabilities on a (sigma, log2 v) grid.

    Nodes sit at sigma = k/4 for k = 0..kmax and covolume v = 2^(j/2) for
    j = j_lo..j_hi.  Every cell is estimated once, with a seed derived from
    the master seed and the cell's global (k, j) index, so extending the
    grid reproduces existing cells bit for bit.  Lookups interpolate
    bilinearly in (sigma, log2 v); covolumes below the grid floor read as 0
    (a dense lattice always meets the region), anything beyond the top or
    the sigma edge raises CoverageError.
    """

    def __init__(self, kmax, j_lo, j_hi, n, p, seed, est, err):
        self.kmax = int(kmax)
        self.j_lo = int(j_lo)
        self.j_hi = int(j_hi)
        self.n = int(n)
        self.p = int(p)
        self.seed = int(seed)
        self.est = np.asarray(est, dtype=float)
        self.err = np.asarray(err, dtype=float)
        shape = (self.kmax + 1, self.j_hi - self.j_lo + 1)
        if self.est.shape != shape or self.err.shape != shape:
            raise DomainError(f"grid arrays must have shape {shape}")
        self.est.setflags(write=False)
        self.err.setflags(write=False)

    # -- construction -------------------------------------------------

    @classmethod
    def build(
        cls,
        sigma_max: float = 48.0,
        j_lo: int = -24,
        j_hi: int = 16,
        *,
        n: int = 4000,
        p: int = 10007,
        seed: int = 0,
    ) -> "AvoidanceCache":
        kmax = round(sigma_max / 0.25)
        if abs(kmax * 0.25 - sigma_max) > 1e-9 or kmax < 1:
            raise DomainError(f"sigma_max must be a positive multiple of 0.25, got {sigma_max}")
        if j_lo > 0 or j_hi < 0 or j_lo >= j_hi:
            raise DomainError(f"need j_lo <= 0 <= j_hi with j_lo < j_hi, got [{j_lo}, {j_hi}]")
        nj = j_hi - j_lo + 1
        est = np.empty((kmax + 1, nj))
        err = np.empty((kmax + 1, nj))
        for k in range(kmax + 1):
            for idx, j in enumerate(range(j_lo, j_hi + 1)):
                est[k, idx], err[k, idx] = cls._cell_value(k, j, n, p, seed)
        return cls(kmax, j_lo, j_hi, n, p, seed, est, err)

    @staticmethod
    def _cell_value(k: int, j: int, n: int, p: int, seed: int) -> tuple[float, float]:
        q = AvoidanceQuery.single(0.25 * k, 2.0 ** (j / 2.0))
        return avoidance_estimate(q, n, p=p, seed=_cell_seed(seed, k, j))

    def extend(self, sigma_max=None, j_lo=None, j_hi=None) -> "AvoidanceCache":
        """A new cache over the union grid, reusing every existing cell."""
        new_kmax = self.kmax if sigma_max is None else round(sigma_max / 0.25)
        if new_kmax * 0.25 != (sigma_max if sigma_max is not None else self.kmax * 0.25):
            raise DomainError(f"sigma_max must be a multiple of 0.25, got {sigma_max}")
        new_kmax = max(new_kmax, self.kmax)
        new_lo = min(self.j_lo if j_lo is None else int(j_lo), self.j_lo)
        new_hi = max(self.j_hi if j_hi is None else int(j_hi), self.j_hi)
        nj = new_hi - new_lo + 1
        est = np.empty((new_kmax + 1, nj))
        err = np.empty((new_kmax + 1, nj))
        for k in range(new_kmax + 1):
            for idx, j in enumerate(range(new_lo, new_hi + 1)):
                if k <= self.kmax and self.j_lo <= j <= self.j_hi:
                    est[k, idx] = self.est[k, j - self.j_lo]
                    err[k, idx] = self.err[k, j - self.j_lo]
                else:
                    est[k, idx], err[k, idx] = self._cell_value(k, j, self.n, self.p, self.seed)
        return AvoidanceCache(new_kmax, new_lo, new_hi, self.n, self.p, self.seed, est, err)

    # -- lookups --------------------------------------------------------

    @property
    def sigma_max(self) -> float:
        return 0.25 * self.kmax

    @property
    def sigma_nodes(self) -> np.ndarray:
        return 0.25 * np.arange(self.kmax + 1)

    @property
    def v_floor(self) -> float:
        return 2.0 ** (self.j_lo / 2.0)

    @property
    def v_ceiling(self) -> float:
        return 2.0 ** (self.j_hi / 2.0)

    def _v_index(self, v: float) -> float | None:
        """Fractional column index for covolume v, None if below the floor."""
        v = _check_finite("v", v)
        if not v > 0:
            raise DomainError(f"v must be positive, got {v}")
        lv = 2.0 * math.log2(v)
        if lv < self.j_lo - 1e-9:
            return None
        if lv > self.j_hi + 1e-9:
            raise CoverageError(
                f"covolume {v} above cached ceiling {self.v_ceiling}"
            )
        return min(max(lv - self.j_lo, 0.0), float(self.j_hi - self.j_lo))

    def sigma_profile(self, v: float) -> np.ndarray:
        """Avoidance values at all sigma nodes for one covolume."""
        x = self._v_index(v)
        if x is None:
            return np.zeros(self.kmax + 1)
        j0 = min(int(x), self.j_hi - self.j_lo - 1)
        f = x - j0
        return (1.0 - f) * self.est[:, j0] + f * self.est[:, j0 + 1]

    def value(self, sigma: float, v: float) -> float:
        sigma = _check_finite("sigma", sigma)
        if sigma < 0:
            raise DomainError(f"sigma must be >= 0, got {sigma}")
        if sigma > self.sigma_max + 1e-9:
            raise CoverageError(f"sigma {sigma} beyond cached maximum {self.sigma_max}")
        prof = self.sigma_profile(v)
        x = min(sigma / 0.25, float(self.kmax))
        k0 = min(int(x), self.kmax - 1)
        f = x - k0
        return float((1.0 - f) * prof[k0] + f * prof[k0 + 1])

    __call__ = value

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        """Write the table as delimited text, one row per cell."""
        lines = [
            f"# p={self.p}",
            f"# n={self.n}",
            f"# seed={self.seed}",
            "sigma,v,estimate,stderr,n,seed",
        ]
        for k in range(self.kmax + 1):
            for idx, j in enumerate(range(self.j_lo, self.j_hi + 1)):
                lines.append(
                    f"{0.25 * k!r},{2.0 ** (j / 2.0)!r},{float(self.est[k, idx])!r},"
                    f"{float(self.err[k, idx])!r},{self.n},{_cell_seed(self.seed, k, j)}"
                )
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "AvoidanceCache":
        meta: dict[str, int] = {}
        cells: dict[tuple[int, int], tuple[float, float]] = {}
        with open(path, "r", encoding="ascii") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    meta[key.strip()] = int(val)
                    continue
                if line.startswith("sigma,"):
                    continue
                sigma_s, v_s, est_s, err_s, _n_s, _seed_s = line.split(",")
                k = round(float(sigma_s) / 0.25)
                j = round(2.0 * math.log2(float(v_s)))
                cells[(k, j)] = (float(est_s), float(err_s))
        for key in ("p", "n", "seed"):
            if key not in meta:
                raise DomainError(f"cache file is missing the '# {key}=' header")
        if not cells:
            raise DomainError("cache file contains no cells")
        kmax = max(k for k, _ in cells)
        j_lo = min(j for _, j in cells)
        j_hi = max(j for _, j in cells)
        est = np.empty((kmax + 1, j_hi - j_lo + 1))
        err = np.empty((kmax + 1, j_hi - j_lo + 1))
        for k in range(kmax + 1):
            for idx, j in enumerate(range(j_lo, j_hi + 1)):
                if (k, j) not in cells:
                    raise DomainError(f"cache file is missing cell sigma={0.25 * k}, j={j}")
                est[k, idx], err[k, idx] = cells[(k, j)]
        return cls(kmax, j_lo, j_hi, meta["n"], meta["p"], meta["seed"], est, err)


# ---------------------------------------------------------------------------
# Tail profile quadratures


def _sigma_integral(cache: AvoidanceCache, v: float) -> float:
    """Integral over sigma of the cached avoidance value at covolume v.

    Trapezoid rule on the cache nodes up to an adaptive cap, plus a
    power-law completion for the range beyond it: the avoidance value
    decays like sigma^-q with q near 3 (the region volume grows cubically),
    so the remainder is estimated as value(cap) * cap / (q - 1) with q
    fitted between cap/2 and cap.  The cap starts at 8 and doubles while
    the completion exceeds 1 percent of the running total, clamped to the
    table edge; a completion still above 5 percent there means the table
    genuinely does not cover the request.
    """
    if not v > 0:
        return 0.0
    prof = cache.sigma_profile(v)
    nodes = cache.sigma_nodes
    cap = min(8.0, cache.sigma_max)
    while True:
        m = int(round(cap / 0.25))
        total = float(np.trapezoid(prof[: m + 1], nodes[: m + 1]))
        tail = 0.0
        if prof[m] > 0.0:
            mid = int(round(cap / 0.5))
            q = 3.0
            if prof[mid] > prof[m]:
                q = min(max(math.log2(prof[mid] / prof[m]), 2.0), 4.0)
            tail = prof[m] * cap / (q - 1.0)
        if total == 0.0 or tail <= 0.01 * total or cap >= cache.sigma_max:
            break
        cap = min(2.0 * cap, cache.sigma_max)
    if tail > 0.05 * (total + tail):
        raise CoverageError(
            f"sigma integral at covolume {v} leaves {tail / (total + tail):.1%} "
            f"beyond the table edge sigma = {cache.sigma_max}"
        )
    return total + tail


def _require_cache(cache) -> AvoidanceCache:
    if cache is None:
        raise DomainError("a built AvoidanceCache is required for d = 3")
    return cache


def _gauss_nodes(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on (a, b)."""
    x, w = np.polynomial.legendre.leggauss(n)
    mid, rad = 0.5 * (a + b), 0.5 * (b - a)
    return mid + rad * x, rad * w


def phi_tail_profile(t: float, d: int = 3, cache: AvoidanceCache | None = None) -> float:
    """Density profile of the refined phi tail at rescaled argument t.

    Its integral over t > 0 equals the inverse-square tail coefficient
    divided by (d - 1) times the unit-ball volume in d - 1 dimensions,
    giving 1 / (2 pi^2) for d = 2 and 1 / (96 zeta(3)) for d = 3.  d = 2 is
    closed form; d = 3 is a quadrature over the avoidance table.
    """
    t = _check_finite("t", t)
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if d == 2:
        u = 1.0 - t
        return 1.5 / math.pi**2 * u * u if u > 0 else 0.0
    if d != 3:
        raise DomainError(f"profile quadrature is implemented for d in {{2, 3}}, got {d}")
    c = _require_cache(cache)
    big_v = 2.0**-0.5 * t**-1.5
    ys, ws = _gauss_nodes(96, 0.0, 1.0)
    val = sum(
        w * _sigma_integral(c, big_v * y) * (1.0 - y) ** 2 for y, w in zip(ys, ws)
    )
    return 2.0**-2.5 / zeta(3.0) * math.sqrt(t) * val


def phi0_tail_profile(t: float, d: int = 3, cache: AvoidanceCache | None = None) -> float:
    """Density profile of the refined phi0 tail at rescaled argument t.

    Equals (2 - 2/d) * phi_tail_profile - (2/d) * t * (d/dt) phi_tail_profile;
    computed here from its own explicit quadrature rather than by numerical
    differentiation.
    """
    t = _check_finite("t", t)
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if d == 2:
        u = 1.0 - t * t
        return 1.5 / math.pi**2 * u if u > 0 else 0.0
    if d != 3:
        raise DomainError(f"profile quadrature is implemented for d in {{2, 3}}, got {d}")
    c = _require_cache(cache)
    big_v = 2.0**-0.5 * t**-1.5
    ys, ws = _gauss_nodes(96, 0.0, 1.0)
    val = sum(
        w * _sigma_integral(c, big_v * y) * y * (1.0 - y) for y, w in zip(ys, ws)
    )
    return 2.0 * 2.0**-2.5 / zeta(3.0) * math.sqrt(t) * val


def tail_profile_integral(
    d: int = 3,
    cache: AvoidanceCache | None = None,
    *,
    t_lo: float = 0.02,
    t_hi: float = 6.0,
) -> float:
    """Numerical integral of phi_tail_profile over t > 0.

    Closed-form targets: 1 / (2 pi^2) for d = 2 and 1 / (96 zeta(3)) for
    d = 3.  The d = 3 quadrature pastes a flat rectangle below t_lo onto
    Gauss-Legendre composites up to t_hi (the profile approaches a finite
    limit at 0 and vanishes well before the default t_hi).
    """
    if d == 2:
        val, _ = integrate.quad(lambda t: phi_tail_profile(t, 2), 0.0, 1.0)
        return val
    if d != 3:
        raise DomainError(f"profile quadrature is implemented for d in {{2, 3}}, got {d}")
    c = _require_cache(cache)
    if not 0 < t_lo < t_hi:
        raise DomainError(f"need 0 < t_lo < t_hi, got {t_lo}, {t_hi}")
    head = t_lo * phi_tail_profile(t_lo, 3, c)
    split = min(1.0, t_hi)
    ts, ws = _gauss_nodes(64, t_lo, split)
    body = sum(w * phi_tail_profile(t, 3, c) for t, w in zip(ts, ws))
    if t_hi > split:
        ts, ws = _gauss_nodes(16, split, t_hi)
        body += sum(w * phi_tail_profile(t, 3, c) for t, w in zip(ts, ws))
    return head + body


def joint_tail_profile_2d(t1: float, t2: float) -> float:
    """Closed-form joint tail profile for consecutive paths, d = 2."""
    if not (t1 >= 0 and t2 >= 0):
        raise DomainError(f"t1, t2 must be >= 0, got {t1}, {t2}")
    u = 1.0 - max(t1, t2)
    return 3.0 / math.pi**2 * u if u > 0 else 0.0


def _cut_halfwidth(cache: AvoidanceCache, v: float) -> float:
    """Truncation point for the cut-normal slope integral at covolume v.

    Picks the first sigma node past which the cached single-region value
    (an upper bound for the two-region integrand) stays below a small
    fraction of its sigma = 0 value, plus a safety margin.
    """
    prof = cache.sigma_profile(v)
    thr = max(0.002 * prof[0], 1e-4)
    above = np.nonzero(prof > thr)[0]
    if above.size == 0:
        return 1.0
    last = int(above[-1])
    if last >= cache.kmax - 2:
        raise CoverageError(
            f"cut-normal truncation at covolume {v} runs past the cached "
            f"sigma range (needs more than sigma = {cache.sigma_max})"
        )
    return min(0.25 * (last + 1) + 1.0, cache.sigma_max)


def joint_tail_profile(
    t1: float,
    t2: float,
    alpha: float,
    d: int = 3,
    *,
    cache: AvoidanceCache | None = None,
    n: int = 2000,
    p: int = 4999,
    seed: int = 0,
    nodes: int = 12,
) -> tuple[float, float]:
    """Joint tail profile of consecutive path lengths with transverse offset.

    Reduces the offset pair to normalized coordinates a = sqrt(t2/t1),
    b = alpha / sqrt(2 t1) and integrates the two-region avoidance
    probability over cut normals, Gauss-Legendre in both the normal's first
    component and its slope.  The slope range is truncated where the cached
    single-region bound is negligible.  Each quadrature node gets its own
    Monte Carlo estimate with a deterministic seed.  Returns (value, stderr).
    """
    t1 = _check_finite("t1", t1)
    t2 = _check_finite("t2", t2)
    alpha = _check_finite("alpha", alpha)
    if not (t1 > 0 and t2 > 0):
        raise DomainError(f"t1, t2 must be positive, got {t1}, {t2}")
    if d != 3:
        raise DomainError(f"joint profile quadrature is implemented for d = 3, got {d}")
    c = _require_cache(cache)
    if not isinstance(n, int) or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    a = math.sqrt(t2 / t1)
    b = alpha / math.sqrt(2.0 * t1)
    big_v = 2.0**-0.5 * t1**-1.5
    if big_v > c.v_ceiling:
        raise CoverageError(
            f"t1 = {t1} needs covolume {big_v}, above the cached ceiling {c.v_ceiling}"
        )
    half = _cut_halfwidth(c, big_v)
    x1_nodes, x1_wts = np.polynomial.legendre.leggauss(nodes)
    h1 = 0.5 * (x1_nodes + 1.0)
    w1 = 0.5 * x1_wts
    s_nodes, s_wts = np.polynomial.legendre.leggauss(2 * nodes)
    s = half * s_nodes
    ws = half * s_wts
    total = 0.0
    var = 0.0
    for i, (h1_i, w1_i) in enumerate(zip(h1, w1)):
        v_i = big_v * (1.0 - h1_i)
        for k, (s_k, ws_k) in enumerate(zip(s, ws)):
            q = AvoidanceQuery.normalized(a, b, (1.0, s_k), v_i)
            est, err = avoidance_estimate(q, n, p=p, seed=_cell_seed(seed, i, k))
            weight = w1_i * h1_i * ws_k
            total += weight * est
            var += (weight * err) ** 2
    pref = 2.0**-2.5 * math.sqrt(t1) / zeta(3.0)
    return pref * total, pref * math.sqrt(var)
