"""Closed-form results for the free-path distributions at small path length.

Conventions shared by this module:

* ``w`` and ``z`` are transverse offset vectors (impact parameters) in the
  open unit ball of R^(d-1); for d = 2 they are signed scalars.
* ``transition_kernel_*`` is the probability density, given an exit offset
  ``w`` on one scatterer, of reaching the next scatterer after rescaled path
  length ``xi`` with entry offset ``z``.
* ``exit_survival_*`` is the probability that the path from an exit with
  offset ``w`` is at least ``xi`` (the kernel integrated over z and the
  remaining length).
* The aggregate curves are densities of the rescaled free path length:
  ``phi`` from a generic start point, ``phi0`` from a scatterer location
  with its scatterer removed, ``phibar0`` between consecutive collisions.

The exact formulas hold only below explicit thresholds in xi; outside them
the functions raise ValidityError rather than extrapolate.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .util import DomainError, OptimizerError, ValidityError, unit_ball_volume, zeta

TWO_OVER_3_SQRT3 = 2.0 / (3.0 * math.sqrt(3.0))


def clamp01(x: float) -> float:
    """Clamp to [0, 1] (the piecewise-linear ramp used by the 2-d kernel)."""
    return min(1.0, max(0.0, float(x)))


def _check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not abs(value) < 1.0:
        raise DomainError(f"|{name}| must be < 1, got {value}")
    return value


def _check_disc(name: str, vec) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    if v.shape != (2,):
        raise DomainError(f"{name} must be a 2-vector, got shape {v.shape}")
    if not float(v @ v) < 1.0:
        raise DomainError(f"{name} must lie in the open unit disc, got {v}")
    return v


def transition_kernel_2d(xi: float, w: float, z: float) -> float:
    """d = 2 transition kernel; piecewise linear and exactly 1/zeta(2) for xi <= 1/2.

    The kernel depends on the signed offsets through max(|w|, |z|) and
    |w + z|.  When w + z = 0 the ramp degenerates to a step at
    1/xi = max(|w|, |z|) + 1 (open on the positive side).
    """
    w = _check_unit_interval("w", w)
    z = _check_unit_interval("z", z)
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    lead = 6.0 / math.pi**2
    num = 1.0 / xi - max(abs(w), abs(z)) - 1.0
    s = abs(w + z)
    if s == 0.0:
        return lead if num > 0 else 0.0
    return lead * clamp01(1.0 + num / s)


def disc_section_area(t: float) -> float:
    """Area of the unit-disc section { x in B^2 : x1 < t } for t in [-1, 1]."""
    t = float(t)
    if abs(t) > 1.0 + 1e-12:
        raise DomainError(f"t must be in [-1, 1], got {t}")
    t = min(1.0, max(-1.0, t))
    return math.pi - math.acos(t) + t * math.sqrt(max(0.0, 1.0 - t * t))


def _tetra_det(end_c, end_d, theta, z, w):
    """Signed 6*volume for free vertices at angles theta on the chosen ends.

    Pinned vertices: (0, -z) and (1, w).  ``theta`` has shape (..., 2).
    """
    tc = theta[..., 0]
    td = theta[..., 1]
    # Rows of the difference matrix relative to the pinned vertex (0, -z).
    b1, b2, b3 = 1.0, w[0] + z[0], w[1] + z[1]
    c1 = float(end_c)
    c2 = np.cos(tc) + z[0]
    c3 = np.sin(tc) + z[1]
    d1 = float(end_d)
    d2 = np.cos(td) + z[0]
    d3 = np.sin(td) + z[1]
    return (
        b1 * (c2 * d3 - c3 * d2)
        - b2 * (c1 * d3 - c3 * d1)
        + b3 * (c1 * d2 - c2 * d1)
    )


def _max_tetra_six_volume(w: np.ndarray, z: np.ndarray, tol: float) -> float:
    """Largest |6V| over tetrahedra in the unit cylinder pinned at (0,-z), (1,w).

    The volume is affine in each free vertex, so the optimum puts both free
    vertices on the end circles; we scan the four end assignments and
    maximize over the two angles.
    """
    from scipy.optimize import minimize

    grid = np.linspace(0.0, 2.0 * math.pi, 25)[:-1]
    tc, td = np.meshgrid(grid, grid, indexing="ij")
    theta_grid = np.stack([tc, td], axis=-1)

    best = 0.0
    for end_c in (0.0, 1.0):
        for end_d in (0.0, 1.0):
            coarse = np.abs(_tetra_det(end_c, end_d, theta_grid, z, w))
            flat = coarse.ravel()
            starts = np.argsort(flat)[-8:]
            for idx in starts:
                x0 = theta_grid.reshape(-1, 2)[idx]
                res = minimize(
                    lambda th: -abs(_tetra_det(end_c, end_d, np.asarray(th), z, w)),
                    x0,
                    method="Nelder-Mead",
                    options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 600},
                )
                best = max(best, -float(res.fun))
    # One refinement pass from scratch would find the same optimum if the
    # multi-start converged; a cheap perturbation check guards against a
    # missed basin.
    check = minimize(
        lambda th: -max(
            abs(_tetra_det(ec, ed, np.asarray(th), z, w))
            for ec in (0.0, 1.0)
            for ed in (0.0, 1.0)
        ),
        np.array([math.pi / 3, 4 * math.pi / 3]),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 600},
    )
    best = max(best, -float(check.fun))
    if best <= tol:
        raise OptimizerError("tetrahedron maximization degenerated to volume 0")
    return best


def linearity_threshold(w, z, tol: float = 1e-8) -> float:
    """Largest xi for which the d = 3 kernel formula is exactly linear.

    Equals 1/(6 V) where V is the maximal volume of a tetrahedron inside
    the closed cylinder [0,1] x closed-unit-disc with one vertex at (0, -z)
    and one at (1, w).  Lies in [1/4, 1] on the closed bidisc, with value 1
    exactly at w = z = 0.
    """
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    for name, vec in (("w", w), ("z", z)):
        if vec.shape != (2,):
            raise DomainError(f"{name} must be a 2-vector")
        if float(vec @ vec) > 1.0 + 1e-9:
            raise DomainError(f"{name} must lie in the closed unit disc")
    return 1.0 / _max_tetra_six_volume(w, z, tol)


def linearity_threshold_inf_z(w) -> float:
    """Infimum of linearity_threshold(w, .) over the second offset (closed form)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (2,):
        raise DomainError("w must be a 2-vector")
    nw = float(np.linalg.norm(w))
    if nw > 1.0 + 1e-9:
        raise DomainError("w must lie in the closed unit disc")
    return min(1.0 / (2.0 * (1.0 + nw)), TWO_OVER_3_SQRT3)


def transition_kernel_3d_small(xi: float, w, z) -> float:
    """d = 3 kernel, exact for xi <= linearity_threshold(w, z).

    Raises ValidityError beyond the threshold: the linear formula is known
    to fail there, so no extrapolated value is returned.
    """
    w = _check_disc("w", w)
    z = _check_disc("z", z)
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    if xi > 0.25 and xi > linearity_threshold(w, z):
        raise ValidityError(
            f"xi={xi} exceeds the exact-linearity threshold for these offsets"
        )
    t = 0.5 * float(np.linalg.norm(w - z))
    return (1.0 - (6.0 / math.pi**2) * disc_section_area(t) * xi) / zeta(3)


def mean_section_area(w: float) -> float:
    """Half the average of disc_section_area(|w - z|/2) over z in the unit disc.

    Computed as a radial integral around w, split where the circle of
    radius r around w leaves the disc; strictly increasing on [0, 1].
    """
    from scipy.integrate import quad

    w = float(w)
    if not 0.0 <= w <= 1.0:
        raise DomainError(f"w must be in [0, 1], got {w}")

    def full_ring(r):
        return disc_section_area(0.5 * r) * r

    def partial_ring(r):
        cosang = (w * w + r * r - 1.0) / (2.0 * w * r)
        return disc_section_area(0.5 * r) * math.acos(min(1.0, max(-1.0, cosang))) * r

    total = 0.0
    if w < 1.0:
        part, _ = quad(full_ring, 0.0, 1.0 - w, epsabs=1e-10, epsrel=1e-12, limit=200)
        total += math.pi * part
    if w > 0.0:
        part, _ = quad(
            partial_ring, 1.0 - w, 1.0 + w, epsabs=1e-10, epsrel=1e-12, limit=200
        )
        total += part
    return total


def exit_survival_small(xi: float, w) -> float:
    """P(free path >= xi) from a scatterer exit at offset w, small-xi form.

    Quadratic in xi; exact for xi <= min(1/(2(1+|w|)), 2/(3*sqrt(3))).
    """
    w = _check_disc("w", w)
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    limit = linearity_threshold_inf_z(w)
    if xi > limit:
        raise ValidityError(f"xi={xi} outside the exact range (0, {limit:.6f}]")
    nw = float(np.linalg.norm(w))
    z3 = zeta(3)
    return 1.0 - (math.pi / z3) * xi + (6.0 / (math.pi**2 * z3)) * mean_section_area(nw) * xi**2


class BoundedValue(NamedTuple):
    value: float
    valid: bool
    max_xi: float


class SmallXiAggregates(NamedTuple):
    phibar0: BoundedValue
    phi: BoundedValue
    phi0: BoundedValue


def small_xi_aggregates(xi: float) -> SmallXiAggregates:
    """The three d = 3 aggregate curves from their exact small-xi polynomials.

    Each value carries its own validity flag; beyond max_xi the polynomial
    is returned but no longer equals the true curve.
    """
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    z3 = zeta(3)
    pi = math.pi
    phibar0 = pi / z3 - ((3 * pi**2 + 16) / (pi**2 * z3)) * xi
    phi = pi - (pi**2 / z3) * xi + ((3 * pi**2 + 16) / (2 * pi * z3)) * xi**2
    phi0 = pi / z3 - (3 * (4 * pi + 3 * math.sqrt(3)) / (4 * pi * z3)) * xi
    return SmallXiAggregates(
        phibar0=BoundedValue(phibar0, xi <= 0.25, 0.25),
        phi=BoundedValue(phi, xi <= 0.25, 0.25),
        phi0=BoundedValue(phi0, xi <= TWO_OVER_3_SQRT3, TWO_OVER_3_SQRT3),
    )


def kernel_sandwich(xi: float, d: int) -> tuple[float, float]:
    """Universal bounds on the transition kernel: valid for every offset pair."""
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    zd = zeta(d)
    lower = (1.0 - 2.0 ** (d - 1) * unit_ball_volume(d - 1) * xi) / zd
    return lower, 1.0 / zd


def leading_order(d: int) -> tuple[float, float, float]:
    """Values at xi -> 0+ of (phibar0, phi0, phi) in dimension d."""
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    v = unit_ball_volume(d - 1)
    zd = zeta(d)
    return v / zd, v / zd, v
