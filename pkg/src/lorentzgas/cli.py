"""Command line front end: curves, closed forms, caches, flight simulation.

Exit codes: 0 on success, 1 for usage or domain errors (the message names
the offending flag and its valid range), 2 when a validation suite fails.
Every CSV written here carries enough header metadata (p, seed, sizes) to
reproduce the run bit for bit.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import billiards, curves, smallxi, tails
from .util import CoverageError, DomainError, ValidityError, unit_ball_volume, zeta


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(value: float) -> str:
    return f"{value:.15g}"


def _need(condition: bool, flag: str, requirement: str, got) -> None:
    """Flag-level domain check; failures exit with code 1."""
    if not condition:
        raise DomainError(f"{flag} {requirement}, got {got}")


def _vec2(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise DomainError(f"{flag} must be two comma-separated numbers, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise DomainError(f"{flag} must be two comma-separated numbers, got {text!r}")


def _save_plot(est, csv_path: str, ylabel: str, overlay=None) -> str:
    """Render the curve next to its CSV; returns the image path."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    base, _ = os.path.splitext(csv_path)
    img = base + ".png"
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    x = est.xi_points
    ax.errorbar(x, est.values, yerr=3.0 * est.stderr, fmt=".", ms=3.5,
                lw=0.8, elinewidth=0.6, label="monte carlo (3 sigma)")
    if overlay is not None:
        ox, oy, olabel = overlay
        ax.plot(ox, oy, "-", lw=1.2, color="C3", label=olabel)
    ax.set_xlabel("xi")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(img, dpi=150)
    plt.close(fig)
    return img


def _require_out(args, flag_needing_it: str | None = None) -> None:
    if args.out is None:
        what = flag_needing_it or "this subcommand"
        raise DomainError(f"--out is required ({what} writes a CSV file)")


# ---------------------------------------------------------------------------
# curve subcommands


def _mk_config(args) -> curves.McConfig:
    _need(curves._is_prime(args.p), "--p", "must be a prime number >= 2", args.p)
    _need(getattr(args, "m", 1) >= 1, "--m", "must be an integer >= 1", args.m)
    _need(args.seed >= 0, "--seed", "must be a nonnegative integer", args.seed)
    count = getattr(args, "samples", None)
    if args.mode == "random":
        _need(count is not None and count >= 1, "--samples",
              "must be an integer >= 1 in random mode", count)
    return curves.McConfig(
        p=args.p,
        m=getattr(args, "m", 1),
        mode=args.mode,
        count=count if args.mode == "random" else None,
        seed=args.seed,
    )


def _check_grid(args) -> None:
    _need(args.delta > 0, "--delta", "must be positive", args.delta)
    _need(args.xi_max > args.delta / 2, "--xi-max",
          "must be at least one bin wide", args.xi_max)


def _cmd_curve_phi(args) -> int:
    if args.fast:
        args.p, args.m, args.mode = 251, 8, "full"
    _check_grid(args)
    cfg = _mk_config(args)
    est = curves.mc_phi_curve(cfg, delta=args.delta, xi_max=args.xi_max)
    _require_out(args, "curve-phi")
    est.to_csv(args.out)
    print(f"wrote {args.out}  (n={est.n_samples}, censored={est.meta['censored']})")
    if args.plot:
        xs = np.linspace(1e-3, min(0.25, args.xi_max), 60)
        ys = [smallxi.small_xi_aggregates(x).phi.value for x in xs]
        img = _save_plot(est, args.out, "phi density", (xs, ys, "exact small-xi form"))
        print(f"wrote {img}")
    return 0


def _cmd_curve_phi0(args) -> int:
    if args.fast:
        args.p, args.samples, args.mode = 10007, 200000, "random"
    _check_grid(args)
    cfg = _mk_config(args)
    est = curves.mc_phi0_curve(cfg, delta=args.delta, xi_max=args.xi_max)
    _require_out(args, "curve-phi0")
    est.to_csv(args.out)
    print(
        f"wrote {args.out}  (n={est.n_samples}, censored={est.meta['censored']}, "
        f"max_alpha={_fmt(est.meta['max_alpha'])})"
    )
    if args.plot:
        lim = 2.0 / (3.0 * math.sqrt(3.0))
        xs = np.linspace(1e-3, min(lim, args.xi_max), 60)
        ys = [smallxi.small_xi_aggregates(x).phi0.value for x in xs]
        img = _save_plot(est, args.out, "phi0 density", (xs, ys, "exact small-xi form"))
        print(f"wrote {img}")
    return 0


def _cmd_kernel_phi0(args) -> int:
    _need(args.xi > 0, "--xi", "must be positive", args.xi)
    _need(curves._is_prime(args.p), "--p", "must be a prime number >= 2", args.p)
    _need(args.samples >= 1, "--samples", "must be an integer >= 1", args.samples)
    w = _vec2(args.w, "--w")
    z = _vec2(args.z, "--z")
    _need(math.hypot(*w) < 1.0, "--w", "must lie inside the unit disc", args.w)
    _need(math.hypot(*z) < 1.0, "--z", "must lie inside the unit disc", args.z)
    cfg = curves.McConfig(p=args.p, mode="random", count=args.samples, seed=args.seed)
    est, err = curves.mc_phi0_kernel(args.xi, w, z, cfg)
    lower, upper = smallxi.kernel_sandwich(args.xi, 3)
    print(f"kernel estimate = {_fmt(est)}  (stderr {_fmt(err)})")
    print(f"universal bounds: [{_fmt(max(lower, 0.0))}, {_fmt(upper)}]")
    threshold = smallxi.linearity_threshold(w, z)
    if args.xi <= threshold:
        exact = smallxi.transition_kernel_3d_small(args.xi, w, z)
        sig = abs(est - exact) / err if err > 0 else 0.0
        print(f"closed form (valid, xi <= {_fmt(threshold)}): {_fmt(exact)}  [{sig:.2f} sigma off]")
    else:
        print(f"closed form not valid here (threshold {_fmt(threshold)})")
    return 0


# ---------------------------------------------------------------------------
# closed forms


def _cmd_exact(args) -> int:
    _need(args.xi > 0, "--xi", "must be positive", args.xi)
    _need(args.d >= 2, "--d", "must be an integer >= 2", args.d)
    z3 = zeta(3.0)
    if args.which == "phi":
        agg = smallxi.small_xi_aggregates(args.xi).phi
        print("phi(xi) = a0 + a1 xi + a2 xi^2 for xi <= 1/4")
        print(f"  a0 = {_fmt(math.pi)} = pi")
        print(f"  a1 = {_fmt(-math.pi ** 2 / z3)} = -pi^2/zeta(3)")
        print(f"  a2 = {_fmt((3 * math.pi ** 2 + 16) / (2 * math.pi * z3))}"
              " = (3*pi^2+16)/(2*pi*zeta(3))")
        print(f"phi({_fmt(args.xi)}) = {_fmt(agg.value)}"
              + ("" if agg.valid else "  [beyond exact range]"))
    elif args.which == "phi0":
        agg = smallxi.small_xi_aggregates(args.xi).phi0
        print("phi0(xi) = b0 + b1 xi for xi <= 2/(3*sqrt(3))")
        print(f"  b0 = {_fmt(math.pi / z3)} = pi/zeta(3)")
        print(f"  b1 = {_fmt(-3 * (4 * math.pi + 3 * math.sqrt(3)) / (4 * math.pi * z3))}"
              " = -3*(4*pi+3*sqrt(3))/(4*pi*zeta(3))")
        print(f"phi0({_fmt(args.xi)}) = {_fmt(agg.value)}"
              + ("" if agg.valid else "  [beyond exact range]"))
    elif args.which == "phibar0":
        agg = smallxi.small_xi_aggregates(args.xi).phibar0
        print("phibar0(xi) = c0 + c1 xi for xi <= 1/4")
        print(f"  c0 = {_fmt(math.pi / z3)} = pi/zeta(3)")
        print(f"  c1 = {_fmt(-(3 * math.pi ** 2 + 16) / (math.pi ** 2 * z3))}"
              " = -(3*pi^2+16)/(pi^2*zeta(3))")
        print(f"phibar0({_fmt(args.xi)}) = {_fmt(agg.value)}"
              + ("" if agg.valid else "  [beyond exact range]"))
    elif args.which == "kernel":
        w = _vec2(args.w, "--w")
        z = _vec2(args.z, "--z")
        threshold = smallxi.linearity_threshold(w, z)
        print(f"linear range: xi <= {_fmt(threshold)}")
        if args.xi > threshold:
            raise ValidityError(
                f"--xi must be at most {_fmt(threshold)} for this (w, z), got {args.xi}"
            )
        val = smallxi.transition_kernel_3d_small(args.xi, w, z)
        print("k(xi, w, z) = (1 - (6/pi^2) A(|w-z|/2) xi) / zeta(3)")
        print(f"k({_fmt(args.xi)}) = {_fmt(val)}")
    elif args.which == "section-area":
        w = float(args.w.split(",")[0]) if args.w else 0.0
        val = smallxi.mean_section_area(w)
        print(f"A({_fmt(w)}) = {_fmt(val)}")
        print(f"A(0) = {_fmt(math.pi * (4 * math.pi + 3 * math.sqrt(3)) / 16)}"
              " = pi*(4*pi+3*sqrt(3))/16")
        print(f"A(1) = {_fmt(5 * math.pi ** 2 / 16 + 1)} = 5*pi^2/16+1")
    else:  # leading
        v = unit_ball_volume(args.d - 1)
        zd = zeta(float(args.d))
        print(f"phi(0+) = {_fmt(v)} = unit_ball_volume({args.d - 1})")
        print(f"phi0(0+) = phibar0(0+) = {_fmt(v / zd)}"
              f" = unit_ball_volume({args.d - 1})/zeta({args.d})")
    return 0


def _cmd_tail(args) -> int:
    _need(args.d >= 2, "--d", "must be an integer >= 2", args.d)
    if args.xi is not None:
        _need(args.xi > 0, "--xi", "must be positive", args.xi)
    d = args.d
    c_phi = tails.phi_tail_coefficient(d)
    c_bar = tails.phibar0_tail_coefficient(d)
    if d == 3:
        phi_sym, bar_sym = "pi/(48*zeta(3))", "1/(24*zeta(3))"
    elif d == 2:
        phi_sym, bar_sym = "1/(6*zeta(2))", "1/(6*zeta(2))"
    else:
        phi_sym = f"pi^({(d - 1)}/2)/(2^{d}*{d}*Gamma({(d + 3)}/2)*zeta({d}))"
        bar_sym = f"2^(2-{d})/({d}*{d + 1}*zeta({d}))"
    print(f"phi(xi) ~ C2 * xi^-2 with C2 = {_fmt(c_phi)} = {phi_sym}")
    print(f"phibar0(xi) ~ C3 * xi^-3 with C3 = {_fmt(c_bar)} = {bar_sym}")
    try:
        endpoint = tails.phi0_support_endpoint(d)
        sym = {2: "1", 3: "2/sqrt(3)", 4: "sqrt(2)"}[d]
        print(f"phi0 support endpoint = {_fmt(endpoint)} = {sym}")
    except DomainError as exc:
        print(f"phi0 support endpoint: {exc}")
    if args.xi is not None:
        print(f"phi tail at xi={_fmt(args.xi)}: {_fmt(tails.phi_tail(args.xi, d))}")
        print(f"phibar0 tail at xi={_fmt(args.xi)}: {_fmt(tails.phibar0_tail(args.xi, d))}")
    return 0


def _cmd_xi1(args) -> int:
    w = _vec2(args.w, "--w")
    if args.z.strip() in ("inf", "Inf", "INF"):
        val = smallxi.linearity_threshold_inf_z(w)
        print(f"xi1(w, far z) = {_fmt(val)}")
    else:
        z = _vec2(args.z, "--z")
        val = smallxi.linearity_threshold(w, z)
        print(f"xi1(w, z) = {_fmt(val)}")
    return 0


# ---------------------------------------------------------------------------
# cache and profiles


def _cmd_xi_cache(args) -> int:
    _require_out(args, "xi-cache")
    _need(args.sigma_max > 0, "--sigma-max", "must be positive", args.sigma_max)
    _need(args.j_lo <= args.j_hi, "--j-lo", "must not exceed --j-hi", args.j_lo)
    _need(args.samples >= 1, "--samples", "must be an integer >= 1", args.samples)
    _need(curves._is_prime(args.p), "--p", "must be a prime number >= 2", args.p)
    _need(args.seed >= 0, "--seed", "must be a nonnegative integer", args.seed)
    if os.path.exists(args.out):
        cache = tails.AvoidanceCache.load(args.out)
        cache = cache.extend(sigma_max=args.sigma_max, j_lo=args.j_lo, j_hi=args.j_hi)
        action = "extended"
    else:
        cache = tails.AvoidanceCache.build(
            sigma_max=args.sigma_max, j_lo=args.j_lo, j_hi=args.j_hi,
            n=args.samples, p=args.p, seed=args.seed,
        )
        action = "built"
    cache.save(args.out)
    cells = (cache.kmax + 1) * (cache.j_hi - cache.j_lo + 1)
    print(f"{action} {args.out}: sigma <= {_fmt(cache.sigma_max)}, "
          f"v in [2^({cache.j_lo}/2), 2^({cache.j_hi}/2)], {cells} cells, "
          f"n={cache.n} per cell, p={cache.p}, seed={cache.seed}")
    return 0


def _cmd_fd(args) -> int:
    _need(args.d in (2, 3), "--d", "must be 2 or 3", args.d)
    try:
        ts = [float(s) for s in args.t.split(",") if s]
    except ValueError:
        raise DomainError(f"--t must be comma-separated numbers, got {args.t!r}")
    _need(bool(ts) and min(ts) > 0, "--t", "needs at least one positive number", args.t)
    cache = None
    if args.d == 3:
        if args.cache is None:
            raise DomainError("--cache is required for --d 3 (build one with xi-cache)")
        cache = tails.AvoidanceCache.load(args.cache)
    profile = tails.phi_tail_profile if args.which == "phi" else tails.phi0_tail_profile
    for t in ts:
        print(f"{_fmt(t)}  {_fmt(profile(t, args.d, cache))}")
    if args.integral:
        value = tails.tail_profile_integral(args.d, cache)
        target = 1.0 / (2.0 * math.pi**2) if args.d == 2 else 1.0 / (96.0 * zeta(3.0))
        sym = "1/(2*pi^2)" if args.d == 2 else "1/(96*zeta(3))"
        print(f"integral = {_fmt(value)}  (exact limit {_fmt(target)} = {sym})")
    return 0


# ---------------------------------------------------------------------------
# flight simulation


def _cmd_simulate(args) -> int:
    _need(args.d in (2, 3), "--d", "must be 2 or 3", args.d)
    _need(0.0 < args.rho < 0.5, "--rho", "must lie in (0, 0.5)", args.rho)
    _need(args.n >= 1, "--n", "must be an integer >= 1", args.n)
    _need(args.seed >= 0, "--seed", "must be a nonnegative integer", args.seed)
    _need(args.max_xi > 0, "--max-xi", "must be positive", args.max_xi)
    if args.ccdf_out:
        _check_grid(args)
    cfg = billiards.BilliardConfig(
        d=args.d, rho=args.rho, n=args.n, seed=args.seed, start_mode=args.mode
    )
    cap_len = args.max_xi * args.rho ** (1 - args.d)
    xi, censored = billiards.sample_paths(cfg, max_len=cap_len)
    _require_out(args, "simulate")
    meta = {"d": args.d, "rho": args.rho, "n": args.n, "seed": args.seed,
            "mode": args.mode, "max_xi": args.max_xi}
    billiards.save_samples(args.out, xi, censored, meta)
    print(f"wrote {args.out}  (n={args.n}, censored={int(censored.sum())})")
    if args.ccdf_out:
        est = billiards.empirical_ccdf(
            xi, censored, delta=args.delta, xi_max=args.xi_max,
            meta={"d": args.d, "rho": args.rho, "seed": args.seed},
        )
        est.to_csv(args.ccdf_out)
        print(f"wrote {args.ccdf_out}")
        if args.plot:
            img = _save_plot(est, args.ccdf_out, "fraction of flights above xi")
            print(f"wrote {img}")
    elif args.plot:
        raise DomainError("--plot needs --ccdf-out (the plot renders the ccdf curve)")
    return 0


# ---------------------------------------------------------------------------
# validation suites


def _run_checks(checks) -> int:
    failures = 0
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        tag = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"{tag}  {name}: {detail}")
    return 2 if failures else 0


def _suite_small_xi(fast: bool):
    def golden_section_area():
        a0 = smallxi.mean_section_area(0.0)
        a1 = smallxi.mean_section_area(1.0)
        t0 = math.pi * (4.0 * math.pi + 3.0 * math.sqrt(3.0)) / 16.0
        t1 = 5.0 * math.pi**2 / 16.0 + 1.0
        ok = abs(a0 - t0) < 1e-9 and abs(a1 - t1) < 1e-9
        return ok, f"A(0) off by {abs(a0 - t0):.2e}, A(1) off by {abs(a1 - t1):.2e}"

    def kernel_within_sandwich():
        xi, w, z = 0.12, (0.3, 0.0), (-0.2, 0.1)
        val = smallxi.transition_kernel_3d_small(xi, w, z)
        lo, hi = smallxi.kernel_sandwich(xi, 3)
        return (lo - 1e-12 <= val <= hi + 1e-12), f"value {val:.6f} in [{lo:.6f}, {hi:.6f}]"

    def kernel_against_mc():
        n = 4000 if fast else 20000
        xi, w, z = 0.2, (0.3, 0.0), (-0.2, 0.1)
        cfg = curves.McConfig(p=10007, mode="random", count=n, seed=11)
        est, err = curves.mc_phi0_kernel(xi, w, z, cfg)
        exact = smallxi.transition_kernel_3d_small(xi, w, z)
        sig = abs(est - exact) / err
        return sig <= 4.0, f"{sig:.2f} sigma from the closed form"

    def aggregates_match_leading_order():
        agg = smallxi.small_xi_aggregates(1e-9)
        lead = smallxi.leading_order(3)
        ok = (abs(agg.phibar0.value - lead[0]) < 1e-6
              and abs(agg.phi0.value - lead[1]) < 1e-6
              and abs(agg.phi.value - lead[2]) < 1e-6)
        return ok, "values at xi -> 0 agree with the stated limits"

    return [
        ("section area goldens", golden_section_area),
        ("kernel inside universal bounds", kernel_within_sandwich),
        ("kernel closed form vs monte carlo", kernel_against_mc),
        ("aggregate curves at zero", aggregates_match_leading_order),
    ]


def _suite_tail(fast: bool):
    def coefficient_identity():
        worst = max(
            abs(2.0 * tails.phi_tail_coefficient(d)
                - unit_ball_volume(d - 1) * tails.phibar0_tail_coefficient(d))
            for d in range(2, 7)
        )
        return worst < 1e-12, f"worst absolute defect {worst:.2e}"

    def integral_2d():
        val = tails.tail_profile_integral(2)
        target = 1.0 / (2.0 * math.pi**2)
        return abs(val - target) < 1e-9, f"{val:.12f} vs {target:.12f}"

    def sandwich_spot_checks():
        n = 1000 if fast else 4000
        rng = np.random.default_rng(3)
        for _ in range(6):
            sigma = rng.uniform(0.0, 3.0)
            v = rng.uniform(0.4, 30.0)
            est, err = tails.avoidance_estimate(
                tails.AvoidanceQuery.single(sigma, v), n, p=4999, seed=17
            )
            lo = max(0.0, 1.0 - tails.cut_region_volume(sigma) / v)
            if not (lo - 3.0 * err - 1e-12 <= est <= 1.0):
                return False, f"violated at sigma={sigma:.2f}, v={v:.2f}"
        return True, "6 random (sigma, v) points inside the bounds"

    def monotone_in_v():
        n = 1000 if fast else 4000
        prev, prev_err = 0.0, 0.0
        for v in (0.5, 1.0, 4.0, 16.0):
            est, err = tails.avoidance_estimate(
                tails.AvoidanceQuery.single(1.0, v), n, p=4999, seed=19
            )
            if est < prev - 3.0 * (err + prev_err):
                return False, f"drop at v={v}"
            prev, prev_err = est, err
        return True, "avoidance nondecreasing in covolume"

    def offset_integral():
        n_outer = 20000 if fast else 60000
        val, err = tails.avoidance_offset_integral(20.0, n_outer=n_outer, n_inner=150)
        return 0.85 - 3 * err <= val <= 1.05 + 3 * err, f"value {val:.3f} +- {err:.3f}"

    return [
        ("tail coefficient identity", coefficient_identity),
        ("profile integral closed form (d=2)", integral_2d),
        ("avoidance sandwich", sandwich_spot_checks),
        ("avoidance monotone in covolume", monotone_in_v),
        ("offset integral near 1", offset_integral),
    ]


def _suite_support(fast: bool):
    def phi0_support():
        n = 100000 if fast else 1000000
        cfg = curves.McConfig(p=10007, mode="random", count=n, seed=5)
        est = curves.mc_phi0_curve(cfg, delta=0.2, xi_max=1.2)
        bound = tails.phi0_support_endpoint(3) + 1e-9
        top = est.meta["max_alpha"]
        return top <= bound, f"max rescaled length {top:.9f} vs bound {bound:.9f}"

    def scatterer_flights_bounded_below():
        cfg = billiards.BilliardConfig(d=3, rho=0.1, n=3000, seed=5, start_mode="scatterer")
        xi, censored = billiards.sample_paths(cfg)
        lens = xi[~censored] / cfg.rho**2
        ok = lens.min() >= 1.0 - 2.0 * cfg.rho - 1e-9
        return ok, f"shortest flight {lens.min():.4f} vs floor {1 - 2 * cfg.rho:.4f}"

    return [
        ("phi0 support endpoint", phi0_support),
        ("flights off a sphere have a length floor", scatterer_flights_bounded_below),
    ]


def _suite_invariants(fast: bool):
    def curve_normalization():
        cfg = curves.McConfig(p=13, m=2, mode="full")
        est = curves.mc_phi_curve(cfg, delta=0.25, xi_max=1.0)
        total = est.counts.sum() + est.meta["censored"]
        mass = float(est.values.sum() * est.delta + est.tail_mass)
        ok = total == est.n_samples and abs(mass - 1.0) < 1e-12
        return ok, f"counts account for all {est.n_samples} samples, mass {mass:.12f}"

    def csv_round_trip():
        import tempfile

        cfg = curves.McConfig(p=13, m=2, mode="full")
        est = curves.mc_phi_curve(cfg, delta=0.25, xi_max=1.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "c.csv")
            est.to_csv(path)
            back = curves.CurveEstimate.from_csv(path)
            ok = (np.array_equal(back.counts, est.counts)
                  and np.array_equal(back.values, est.values)
                  and back.meta == est.meta)
        return ok, "curve CSV reproduces the estimate exactly"

    def map_algebra():
        rng = np.random.default_rng(23)
        worst = 0.0
        for _ in range(25):
            a = tails.ParabolaMap(rng.uniform(0.3, 2.0), rng.uniform(-1.0, 1.0))
            b = tails.ParabolaMap(rng.uniform(0.3, 2.0), rng.uniform(-1.0, 1.0))
            pts = rng.uniform(-2.0, 2.0, size=(4, 2))
            worst = max(worst, float(np.max(np.abs(
                b.apply(a.apply(pts)) - a.then(b).apply(pts)))))
            back = a.then(a.inverse())
            worst = max(worst, abs(back.alpha - 1.0), abs(back.beta))
        return worst < 1e-12, f"worst composition defect {worst:.2e}"

    def coincident_pair_equals_single():
        y, h = (0.15, 0.25), (1.0, 0.5)
        e2 = tails.avoidance_estimate(tails.AvoidanceQuery.pair(y, y, h, 1.0),
                                      2000, p=4999, seed=8)
        e1 = tails.avoidance_estimate(tails.AvoidanceQuery((y,), h, 1.0),
                                      2000, p=4999, seed=8)
        return e1 == e2, "two coincident regions count like one"

    def ccdf_shape():
        cfg = billiards.BilliardConfig(d=2, rho=0.15, n=2000, seed=3)
        xi, censored = billiards.sample_paths(cfg)
        est = billiards.empirical_ccdf(xi, censored, delta=0.25, xi_max=5.0)
        ok = (est.values[0] == 1.0 and np.all(np.diff(est.values) <= 0)
              and np.all((est.values >= 0) & (est.values <= 1)))
        return ok, "starts at 1, nonincreasing, within [0, 1]"

    return [
        ("curve normalization", curve_normalization),
        ("curve CSV round trip", csv_round_trip),
        ("paraboloid map algebra", map_algebra),
        ("coincident pair avoidance", coincident_pair_equals_single),
        ("empirical ccdf shape", ccdf_shape),
    ]


def _cmd_validate(args) -> int:
    suites = {
        "small-xi": _suite_small_xi,
        "tail": _suite_tail,
        "support": _suite_support,
        "invariants": _suite_invariants,
    }
    if args.suite == "all":
        checks = []
        for name in ("small-xi", "tail", "support", "invariants"):
            checks.extend(suites[name](args.fast))
    else:
        checks = suites[args.suite](args.fast)
    return _run_checks(checks)


# ---------------------------------------------------------------------------
# parser wiring


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="lorentzgas",
        description="Free path length statistics at small scatterer radius",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cp = sub.add_parser("curve-phi", help="binned path density estimate")
    cp.add_argument("--p", type=int, default=251)
    cp.add_argument("--m", type=int, default=8)
    cp.add_argument("--mode", choices=["full", "random"], default="full")
    cp.add_argument("--samples", type=int, default=None)
    cp.add_argument("--delta", type=float, default=0.02)
    cp.add_argument("--xi-max", type=float, default=2.0)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--out", default=None)
    cp.add_argument("--plot", action="store_true")
    cp.add_argument("--fast", action="store_true",
                    help="force the quick preset p=251, m=8")
    cp.set_defaults(fn=_cmd_curve_phi)

    c0 = sub.add_parser("curve-phi0", help="binned density off a scatterer")
    c0.add_argument("--p", type=int, default=10007)
    c0.add_argument("--m", type=int, default=1)
    c0.add_argument("--mode", choices=["full", "random"], default="random")
    c0.add_argument("--samples", type=int, default=200000)
    c0.add_argument("--delta", type=float, default=0.02)
    c0.add_argument("--xi-max", type=float, default=1.2)
    c0.add_argument("--seed", type=int, default=0)
    c0.add_argument("--out", default=None)
    c0.add_argument("--plot", action="store_true")
    c0.add_argument("--fast", action="store_true",
                    help="force the quick preset p=10007, 200000 samples")
    c0.set_defaults(fn=_cmd_curve_phi0)

    kp = sub.add_parser("kernel-phi0", help="transition kernel estimate at one point")
    kp.add_argument("--xi", type=float, required=True)
    kp.add_argument("--w", default="0,0")
    kp.add_argument("--z", default="0,0")
    kp.add_argument("--p", type=int, default=10007)
    kp.add_argument("--samples", type=int, default=20000)
    kp.add_argument("--seed", type=int, default=0)
    kp.set_defaults(fn=_cmd_kernel_phi0)

    ex = sub.add_parser("exact", help="closed-form values with symbolic constants")
    ex.add_argument("--which",
                    choices=["phi", "phi0", "phibar0", "kernel", "section-area", "leading"],
                    required=True)
    ex.add_argument("--xi", type=float, default=0.1)
    ex.add_argument("--w", default="0,0")
    ex.add_argument("--z", default="0,0")
    ex.add_argument("--d", type=int, default=3)
    ex.set_defaults(fn=_cmd_exact)

    tl = sub.add_parser("tail", help="large-xi tail coefficients")
    tl.add_argument("--d", type=int, default=3)
    tl.add_argument("--xi", type=float, default=None)
    tl.set_defaults(fn=_cmd_tail)

    x1 = sub.add_parser("xi1", help="linear range threshold of the kernel")
    x1.add_argument("--w", required=True)
    x1.add_argument("--z", required=True, help="two numbers, or 'inf'")
    x1.set_defaults(fn=_cmd_xi1)

    xc = sub.add_parser("xi-cache", help="build or extend the avoidance table")
    xc.add_argument("--out", default=None)
    xc.add_argument("--sigma-max", type=float, default=48.0)
    xc.add_argument("--j-lo", type=int, default=-24)
    xc.add_argument("--j-hi", type=int, default=16)
    xc.add_argument("--samples", type=int, default=4000)
    xc.add_argument("--p", type=int, default=10007)
    xc.add_argument("--seed", type=int, default=0)
    xc.set_defaults(fn=_cmd_xi_cache)

    fd = sub.add_parser("fd", help="tail profile values from the cache")
    fd.add_argument("--t", required=True, help="comma-separated arguments")
    fd.add_argument("--d", type=int, default=3)
    fd.add_argument("--which", choices=["phi", "phi0"], default="phi")
    fd.add_argument("--cache", default=None)
    fd.add_argument("--integral", action="store_true")
    fd.set_defaults(fn=_cmd_fd)

    sm = sub.add_parser("simulate", help="direct flight sampling")
    sm.add_argument("--d", type=int, default=3)
    sm.add_argument("--rho", type=float, required=True)
    sm.add_argument("--n", type=int, default=100000)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--mode", choices=sorted(billiards._START_MODES), default="generic")
    sm.add_argument("--max-xi", type=float, default=10.0)
    sm.add_argument("--out", default=None)
    sm.add_argument("--ccdf-out", default=None)
    sm.add_argument("--delta", type=float, default=0.05)
    sm.add_argument("--xi-max", type=float, default=2.0)
    sm.add_argument("--plot", action="store_true")
    sm.set_defaults(fn=_cmd_simulate)

    va = sub.add_parser("validate", help="run a self-check suite")
    va.add_argument("--suite",
                    choices=["small-xi", "tail", "support", "invariants", "all"],
                    default="all")
    va.add_argument("--fast", action="store_true")
    va.set_defaults(fn=_cmd_validate)

    return parser


def main(argv=None) -> int:
    threads = os.environ.get("LORENTZ_THREADS")
    if threads and threads != "1":
        print(
            "note: LORENTZ_THREADS is informational; the samplers run "
            "single-threaded and results never depend on it",
            file=sys.stderr,
        )
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DomainError, ValidityError, CoverageError) as exc:
        print(f"lorentzgas {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"lorentzgas {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
