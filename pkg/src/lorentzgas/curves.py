"""Monte Carlo estimators for the free-path distribution curves (d=3).

Two sampling designs share the same histogram layout:

* full enumeration: every Hecke coset at level p, and for the generic-start
  curve every point of an m^3 torus grid of starting shifts, contributes one
  path-length sample;
* random sampling: `count` independent samples, each drawing a coset index
  uniformly (and, for the generic-start curve, a uniform shift).

Histogramming the free path length alpha is equivalent to evaluating the
per-bin pair-of-tubes indicators, because the event "avoids the tube of
height a but not the tube of height b" is exactly {a <= alpha < b}; the
histogram needs one enumeration per sample instead of one per bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fast
from .lattices import _is_prime, fixed_rotation_3d
from .util import DomainError, zeta

_ZETA3 = zeta(3.0)


def default_base_shift() -> np.ndarray:
    """The irrational torus base point used by the full-enumeration mode."""
    return np.sqrt(np.array([2.0, 3.0, 5.0])) % 1.0


@dataclass(frozen=True)
class McConfig:
    """Sampling plan for the curve estimators.

    mode "full" enumerates all 1+p+p^2 cosets (times m^3 shifts for the
    generic-start curve); mode "random" draws `count` samples.  rotation
    and x0 default to a fixed generic rotation and (sqrt 2, sqrt 3, sqrt 5)
    mod 1.
    """

    p: int
    m: int = 1
    mode: str = "full"
    count: int | None = None
    seed: int = 0
    rotation: np.ndarray | None = None
    x0: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not _is_prime(self.p):
            raise DomainError(f"p must be prime, got {self.p}")
        if self.m < 1:
            raise DomainError(f"m must be >= 1, got {self.m}")
        if self.mode not in ("full", "random"):
            raise DomainError(f"mode must be 'full' or 'random', got {self.mode!r}")
        if self.mode == "random":
            if self.count is None or self.count < 1:
                raise DomainError("random mode needs count >= 1")
        if self.seed < 0:
            raise DomainError(f"seed must be >= 0, got {self.seed}")

    def rotation_matrix(self) -> np.ndarray:
        if self.rotation is None:
            return fixed_rotation_3d()
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3):
            raise DomainError(f"rotation must be 3x3, got {r.shape}")
        return r

    def base_shift(self) -> np.ndarray:
        if self.x0 is None:
            return default_base_shift()
        x = np.asarray(self.x0, dtype=float)
        if x.shape != (3,):
            raise DomainError(f"x0 must have shape (3,), got {x.shape}")
        return np.mod(x, 1.0)


@dataclass(frozen=True)
class CurveEstimate:
    """Binned curve estimate with per-point binomial standard errors.

    For density estimates (the default), values[i] is the bin average of
    the density over [bin_edges[i], bin_edges[i+1]) and counts are per-bin
    tallies.  When meta["kind"] == "ccdf" the estimate is a survival
    function instead: counts[i] is the number of samples strictly above
    bin_edges[i] and values[i] = counts[i] / n_samples, evaluated at the
    left edges (so the first point sits at 0 with value 1).  Either way
    counts are the authoritative payload; values and stderr derive from
    them, which is what makes CSV round-trips exact.
    """

    bin_edges: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    n_samples: int
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def delta(self) -> float:
        return float(self.meta["delta"])

    @property
    def xi_mid(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def xi_points(self) -> np.ndarray:
        """Abscissas the values refer to: midpoints for densities, left
        edges for ccdf estimates."""
        if self.meta.get("kind") == "ccdf":
            return self.bin_edges[:-1]
        return self.xi_mid

    @property
    def tail_mass(self) -> float:
        """Fraction of samples at or beyond the last bin edge."""
        return int(self.meta["censored"]) / self.n_samples

    def to_csv(self, path) -> None:
        lines = []
        for key in ("d", "rho", "p", "m", "mode", "count", "seed", "delta",
                    "n_samples", "censored", "max_alpha", "x0", "rotation",
                    "kind"):
            if key in self.meta:
                lines.append(f"# {key}={self.meta[key]}")
        lines.append("xi_mid,value,stderr,n")
        grid = self.xi_points
        for i in range(len(self.counts)):
            lines.append(
                f"{float(grid[i])!r},{float(self.values[i])!r},"
                f"{float(self.stderr[i])!r},{int(self.counts[i])}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "CurveEstimate":
        meta = {}
        counts = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line.lstrip("# ").partition("=")
                    meta[key.strip()] = val.strip()
                    continue
                if line.startswith("xi_mid"):
                    continue
                counts.append(int(line.split(",")[3]))
        for key in ("delta", "n_samples", "censored", "seed"):
            if key not in meta:
                raise DomainError(f"curve CSV is missing required header {key!r}")
        delta = float(meta["delta"])
        n_samples = int(meta["n_samples"])
        meta["delta"] = delta
        meta["n_samples"] = n_samples
        meta["censored"] = int(meta["censored"])
        if "p" in meta:
            meta["p"] = int(meta["p"])
        if "m" in meta:
            meta["m"] = int(meta["m"])
        if "d" in meta:
            meta["d"] = int(meta["d"])
        if "rho" in meta:
            meta["rho"] = float(meta["rho"])
        if "count" in meta:
            meta["count"] = None if meta["count"] == "None" else int(meta["count"])
        if "max_alpha" in meta:
            meta["max_alpha"] = float(meta["max_alpha"])
        seed = int(meta["seed"])
        meta["seed"] = seed
        return _assemble_estimate(
            np.asarray(counts, dtype=np.int64), delta, n_samples, seed, meta
        )


def _assemble_estimate(counts, delta, n_samples, seed, meta) -> CurveEstimate:
    nbins = len(counts)
    edges = delta * np.arange(nbins + 1)
    frac = counts / n_samples
    if meta.get("kind") == "ccdf":
        values = frac
        stderr = np.sqrt(frac * (1.0 - frac) / n_samples)
    else:
        values = frac / delta
        stderr = np.sqrt(frac * (1.0 - frac) / n_samples) / delta
    return CurveEstimate(
        bin_edges=edges,
        values=values,
        stderr=stderr,
        counts=np.asarray(counts, dtype=np.int64),
        n_samples=n_samples,
        seed=seed,
        meta=meta,
    )


def _bin_layout(delta: float, xi_max: float) -> int:
    if not (delta > 0 and math.isfinite(delta)):
        raise DomainError(f"delta must be positive, got {delta}")
    if not (xi_max > 0 and math.isfinite(xi_max)):
        raise DomainError(f"xi_max must be positive, got {xi_max}")
    nbins = int(round(xi_max / delta))
    if nbins < 1 or abs(nbins * delta - xi_max) > 1e-9 * max(1.0, xi_max):
        raise DomainError(
            f"xi_max={xi_max} is not an integer number of bins of width {delta}"
        )
    return nbins


def _curve(cfg: McConfig, delta: float, xi_max: float, with_shift: bool, kind: str) -> CurveEstimate:
    nbins = _bin_layout(delta, xi_max)
    kmat = cfg.rotation_matrix()
    x0 = cfg.base_shift()
    ncosets = 1 + cfg.p + cfg.p * cfg.p
    if cfg.mode == "full":
        m = cfg.m if with_shift else 1
        shift_base = x0 if with_shift else np.zeros(3)
        hist, censored, amax = _fast.phi_hist_full(
            cfg.p, 0, ncosets, kmat, shift_base, m, delta, nbins, xi_max
        )
        n_samples = ncosets * m**3
    else:
        hist, censored, amax = _fast.phi_hist_random(
            cfg.p, 0, cfg.count, cfg.seed, kmat, 1 if with_shift else 0,
            delta, nbins, xi_max,
        )
        n_samples = cfg.count
    meta = {
        "p": cfg.p,
        "m": cfg.m if with_shift else 1,
        "mode": cfg.mode,
        "count": cfg.count,
        "seed": cfg.seed,
        "delta": delta,
        "n_samples": n_samples,
        "censored": int(censored),
        "max_alpha": float(amax),
        "x0": ",".join(repr(float(v)) for v in x0),
        "rotation": "fixed3d" if cfg.rotation is None else "custom",
        "kind": kind,
    }
    return _assemble_estimate(hist, delta, n_samples, cfg.seed, meta)


def mc_phi_curve(cfg: McConfig, delta: float, xi_max: float) -> CurveEstimate:
    """Generic-start free path density curve.

    Each sample is a pair (coset lattice, torus shift); the sampled length
    is the least x1 of an offset lattice point in the open unit-radius tube,
    capped at xi_max (longer flights land in the censored tail mass).
    """
    return _curve(cfg, delta, xi_max, with_shift=True, kind="phi")


def mc_phi0_curve(cfg: McConfig, delta: float, xi_max: float) -> CurveEstimate:
    """Scatterer-start free path density curve (no torus shifts).

    The sampled lattices all contain the origin, which the open tube
    excludes; meta["max_alpha"] records the largest uncensored length, a
    support diagnostic (the density vanishes beyond 2/sqrt(3) in the limit).
    """
    return _curve(cfg, delta, xi_max, with_shift=False, kind="phi0")


def mc_phi0_kernel(xi: float, w, z, cfg: McConfig) -> tuple[float, float]:
    """Pointwise transition-density estimate via the block-matrix sampler.

    Draws `cfg.count` random 2d cosets with uniform rotations and uniform
    [0,1)^2 row multipliers, assembles the 3x3 unimodular block matrix, and
    returns (zeta(3)^{-1} * avoidance fraction, binomial stderr).
    """
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    if w.shape != (2,) or z.shape != (2,):
        raise DomainError("w and z must be 2-vectors")
    if not (np.linalg.norm(w) < 1.0 and np.linalg.norm(z) < 1.0):
        raise DomainError("w and z must lie in the open unit disc")
    if not (xi > 0 and math.isfinite(xi)):
        raise DomainError(f"xi must be positive, got {xi}")
    if cfg.mode != "random":
        raise DomainError("the kernel estimator requires a random-mode config")
    n = cfg.count
    cnt = _fast.kernel_avoid_count(
        xi, w[0], w[1], z[0], z[1], cfg.p, 0, n, cfg.seed
    )
    frac = cnt / n
    est = frac / _ZETA3
    err = math.sqrt(frac * (1.0 - frac) / n) / _ZETA3
    return est, err
