"""Shared helpers: typed errors, unit-ball volumes, zeta values."""

from __future__ import annotations

import math


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the function."""


class ValidityError(ValueError):
    """A closed-form expression was requested outside its validity range."""


class BudgetError(RuntimeError):
    """A lattice enumeration would exceed the candidate-point budget."""


class CoverageError(ValueError):
    """A cached table does not cover the requested evaluation point."""


class OptimizerError(RuntimeError):
    """A numerical optimizer failed to converge to the requested tolerance."""


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n (n >= 0)."""
    if n < 0:
        raise DomainError(f"dimension must be >= 0, got {n}")
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def zeta(s: float) -> float:
    """Riemann zeta for real s > 1."""
    if s <= 1:
        raise DomainError(f"zeta(s) needs s > 1, got {s}")
    from scipy.special import zeta as _zeta

    return float(_zeta(s, 1))
