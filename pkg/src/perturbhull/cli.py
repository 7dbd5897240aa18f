"""Command-line front end: ``perturbhull {regimes,simulate,limit,constants,verify}``.

This is the only module that touches the file system.  Every command writes
``manifest.json`` next to its outputs; re-running the recorded argv reproduces
the run.  Exit codes: 0 success, 1 a check failed, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    ExperimentSpec,
    boundary_profile_compare,
    clt_diagnostics,
    default_workers,
    dumps_json,
    extreme_point_pattern_compare,
    height_distribution_test,
    records_csv,
    run_moment_experiment,
    scaling_slope,
)
from .geometry import DomainError
from .limit import (
    default_window,
    estimate_limit_constant,
    estimate_limit_score_mean,
    estimate_sigma_sq,
    festoon,
    festoon_envelope_csv,
    festoon_points_csv,
    regular_grid,
    sample_limit_process,
)
from .models import stream
from .scaling import PointMass, classify, critical_alphas, nu_limit_pdf, parse_alpha
from .verify import perturbed_kappa, run_all

OUT_ENV = "PERTURBHULL_OUT"
DEFAULT_OUT = "perturbhull-out"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SIMULATE_KEYS = {
    "d", "alpha", "kind", "scales", "ks", "replications", "seed", "window", "height_cap",
    "engine", "experiments", "grid", "workers",
}
SIMULATE_REQUIRED = ("d", "alpha", "scales")
EXPERIMENTS = ("moments", "slope", "heights", "profile", "clt", "pattern")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc.strerror}") from exc
    return path


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from exc


def _manifest(out: Path, command: str, config: dict, argv: list[str]) -> None:
    body = {"command": command, "version": __version__, "argv": argv, "config": config}
    _write(out / "manifest.json", dumps_json(body))


def _dims(text: str) -> list[int]:
    """"3" or "2-5"."""
    try:
        if "-" in text:
            lo, hi = text.split("-")
            dims = list(range(int(lo), int(hi) + 1))
        else:
            dims = [int(text)]
    except ValueError as exc:
        raise ConfigError(f"bad dimension range {text!r}") from exc
    if not dims or min(dims) < 2:
        raise ConfigError("dimensions must be >= 2")
    return dims


def _grid(text: str) -> np.ndarray:
    """"lo:hi:n" as a linspace."""
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}, expected lo:hi:n") from exc


def _alpha_json(a) -> str | float:
    return str(a) if isinstance(a, Fraction) else float(a)


# ---------------------------------------------------------------------------
# regimes


def nu_alphas(d: int) -> list:
    """One alpha per regime, as drawn in the nu figure."""
    lo, hi = critical_alphas(d)
    return [Fraction(1), hi, hi / 2, Fraction(0), lo / 2, lo, lo - 1]


def beta_curve_csv(d: int, alphas: np.ndarray) -> str:
    lo, hi = critical_alphas(d)
    grid = sorted(set(map(float, alphas)) | {float(lo), 0.0, float(hi)})
    lines = ["alpha,beta,regime"]
    for a in grid:
        rp = classify(d, a)
        lines.append(f"{_fmt(a)},{_fmt(rp.beta)},{rp.regime.value}")
    return "\n".join(lines) + "\n"


def nu_density_csv(d: int, alphas, hs: np.ndarray) -> str:
    """Density rows; the point mass of the SUB regime is one row h=0, density=inf."""
    lines = ["alpha,h,density"]
    for a in alphas:
        dens = nu_limit_pdf(d, a, hs)
        label = _fmt(a)
        if isinstance(dens, PointMass):
            lines.append(f"{label},{_fmt(dens.at)},inf")
            continue
        for h, f in zip(hs, np.atleast_1d(dens)):
            lines.append(f"{label},{_fmt(h)},{_fmt(f)}")
    return "\n".join(lines) + "\n"


def cmd_regimes(args) -> int:
    out = _out_dir(args)
    dims = _dims(args.d)
    alphas = _grid(args.alpha_grid)
    hs = _grid(args.h_grid)
    nu_list = [parse_alpha(a) for a in args.nu_alphas.split(",")] if args.nu_alphas else None
    for d in dims:
        target = out if len(dims) == 1 else out / f"d{d}"
        target.mkdir(parents=True, exist_ok=True)
        _write(target / "beta_curve.csv", beta_curve_csv(d, alphas))
        _write(target / "nu_density.csv", nu_density_csv(d, nu_list or nu_alphas(d), hs))
    _manifest(out, "regimes", {"d": args.d, "alpha_grid": args.alpha_grid, "h_grid": args.h_grid,
                               "nu_alphas": args.nu_alphas}, args.argv)
    print(f"wrote beta_curve.csv and nu_density.csv for d={args.d} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _load_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    unknown = sorted(set(cfg) - SIMULATE_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    overrides = {
        "d": args.d, "alpha": args.alpha, "kind": args.kind, "replications": args.replications,
        "seed": args.seed, "window": args.window, "height_cap": args.height_cap, "engine": args.engine,
        "workers": args.workers,
    }
    if args.scales:
        overrides["scales"] = [float(s) for s in args.scales.split(",")]
    if args.ks:
        overrides["ks"] = [int(k) for k in args.ks.split(",")]
    if args.experiments:
        overrides["experiments"] = args.experiments.split(",")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    for key in SIMULATE_REQUIRED:
        if key not in cfg:
            raise ConfigError(f"missing required key: {key}")
    exps = cfg.setdefault("experiments", ["moments"])
    bad = [e for e in exps if e not in EXPERIMENTS]
    if bad:
        raise ConfigError(f"unknown experiment(s): {', '.join(bad)}")
    return cfg


def _spec(cfg: dict) -> ExperimentSpec:
    try:
        return ExperimentSpec(
            d=int(cfg["d"]),
            alpha=float(parse_alpha(cfg["alpha"])),
            scales=tuple(cfg["scales"]),
            kind=cfg.get("kind", "poisson"),
            ks=tuple(cfg.get("ks", [0])),
            replications=int(cfg.get("replications", 10)),
            seed=int(cfg.get("seed", 0)),
            window=cfg.get("window"),
            height_cap=cfg.get("height_cap"),
            engine=cfg.get("engine", "qhull"),
        )
    except (DomainError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    spec = _spec(cfg)
    out = _out_dir(args)
    workers = int(cfg.get("workers") or default_workers())
    exps = cfg["experiments"]
    report = None
    if {"moments", "slope", "clt"} & set(exps):
        report = run_moment_experiment(spec, workers)
        _write(out / "moments.json", dumps_json(report.to_dict()))
        _write(out / "moments.csv", report.to_csv())
        print(f"moments: {len(report.rows)} rows, failure rate {report.failure_rate:.3g}")
    if "slope" in exps:
        fits = {str(k): scaling_slope(report, k).__dict__ for k in spec.ks}
        _write(out / "slope.json", dumps_json(fits))
        for k, fit in fits.items():
            print(f"slope k={k}: {fit['slope']:.4f} +- {fit['stderr']:.4f} (all scales {fit['slope_all']:.4f})")
    if "clt" in exps:
        clt = {str(k): clt_diagnostics(report.samples(len(spec.scales) - 1, k)).__dict__ for k in spec.ks}
        _write(out / "clt.json", dumps_json(clt))
    if "heights" in exps:
        res = height_distribution_test(spec, workers)
        _write(out / "heights.csv", records_csv(res))
    if "profile" in exps:
        half = float(cfg.get("grid", 5.0))
        grid = regular_grid(spec.d - 1, half, 101 if spec.d == 2 else 21)
        res = boundary_profile_compare(spec, grid, workers)
        _write(out / "profile.csv", records_csv(res))
        _write(out / "profile.json", dumps_json([r.__dict__ for r in res]))
    if "pattern" in exps:
        res = extreme_point_pattern_compare(spec, workers=workers)
        _write(out / "pattern.json", dumps_json([r.__dict__ for r in res]))
    cfg_out = dict(cfg, alpha=_alpha_json(parse_alpha(cfg["alpha"])), workers=workers)
    _manifest(out, "simulate", cfg_out, args.argv)
    print(f"wrote {', '.join(exps)} results to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# limit and constants


def cmd_limit(args) -> int:
    out = _out_dir(args)
    alpha = parse_alpha(args.alpha)
    L0, H0 = default_window(args.d, alpha)
    L = args.L or L0
    H = args.H or H0
    rng = stream(args.seed, 0, "limit")
    cloud = sample_limit_process(args.d, alpha, L, H, rng)
    if len(cloud) == 0:
        raise ConfigError("the sampled window is empty; enlarge L or H")
    sample = festoon(cloud)
    _write(out / "festoon_points.csv", festoon_points_csv(sample))
    # the inner half of the window, away from edge effects of the finite sample
    grid = regular_grid(args.d - 1, L / 2.0, args.grid_points)
    _write(out / "festoon_envelope.csv", festoon_envelope_csv(sample, grid))
    summary = {"points": len(cloud), "extreme": int(len(sample.ext)), "L": L, "H": H, "grid_radius": L / 2.0}
    if args.estimate_h is not None:
        est = estimate_limit_score_mean(args.d, alpha, args.k, args.estimate_h, args.mc,
                                        stream(args.seed, 1, "estimate"))
        summary["score_mean"] = est.__dict__
        print(f"E xi_{args.k}((0,{args.estimate_h:g})) = {est.value:.5f} +- {est.stderr:.5f}")
    _write(out / "limit.json", dumps_json(summary))
    _manifest(out, "limit", {"d": args.d, "alpha": _alpha_json(alpha), "L": L, "H": H, "seed": args.seed,
                             "k": args.k, "estimate_h": args.estimate_h, "mc": args.mc,
                             "grid_points": args.grid_points}, args.argv)
    print(f"{len(cloud)} points, {len(sample.ext)} extreme; wrote festoon CSVs to {out}")
    return EXIT_OK


def cmd_constants(args) -> int:
    out = _out_dir(args)
    alpha = parse_alpha(args.alpha)
    mean = estimate_limit_constant(args.d, alpha, args.k, args.mc, stream(args.seed, 0, "mean"))
    result = {"expectation": mean.__dict__}
    print(f"expectation constant: {mean.value:.5f} +- {mean.stderr:.5f}")
    if not args.skip_variance:
        var = estimate_sigma_sq(args.d, alpha, args.k, args.mc, stream(args.seed, 0, "variance"))
        result["variance"] = var.__dict__
        print(f"variance constant:    {var.value:.5f} +- {var.stderr:.5f}")
    _write(out / "constants.json", dumps_json(result))
    _manifest(out, "constants", {"d": args.d, "alpha": _alpha_json(alpha), "k": args.k, "mc": args.mc,
                                 "seed": args.seed, "skip_variance": args.skip_variance},
              args.argv)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    kappa = perturbed_kappa(args.perturb_kappa) if args.perturb_kappa else None
    results = run_all(kappa=kappa) if kappa else run_all()
    ok = True
    for r in results:
        flag = "PASS" if r.passed else "FAIL"
        print(f"{flag}  {r.name:20s} worst={r.worst:.3e} tol={r.tolerance:.0e} ({r.seconds:.2f}s) {r.detail}")
        ok &= r.passed
    if args.out or os.environ.get(OUT_ENV):
        out = _out_dir(args)
        _write(out / "verify.json", dumps_json([r.__dict__ for r in results]))
        _manifest(out, "verify", {"perturb_kappa": args.perturb_kappa},
                  args.argv)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perturbhull", description="Convex hulls of perturbed sphere samples.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    r = sub.add_parser("regimes", help="beta(alpha) curve and limit height densities")
    common(r)
    r.add_argument("--d", default="2", help="dimension or range, e.g. 2-4")
    r.add_argument("--alpha-grid", default="-5:2:701", help="lo:hi:n")
    r.add_argument("--h-grid", default="0:4:401", help="lo:hi:n")
    r.add_argument("--nu-alphas", default=None, help="comma list of alphas for nu_density.csv")
    r.set_defaults(func=cmd_regimes)

    s = sub.add_parser("simulate", help="replication experiments on the finite models")
    common(s)
    s.add_argument("--config", help="JSON config; flags override its scalars")
    s.add_argument("--d", type=int)
    s.add_argument("--alpha")
    s.add_argument("--kind", choices=("binomial", "poisson"))
    s.add_argument("--scales", help="comma list, strictly increasing")
    s.add_argument("--ks", help="comma list of face dimensions")
    s.add_argument("--replications", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--window", type=float)
    s.add_argument("--height-cap", type=float)
    s.add_argument("--engine", choices=("qhull", "incremental"))
    s.add_argument("--experiments", help=f"comma list from {','.join(EXPERIMENTS)}")
    s.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    s.set_defaults(func=cmd_simulate)

    lim = sub.add_parser("limit", help="sample the limit process and its festoon")
    common(lim)
    lim.add_argument("--d", type=int, default=2)
    lim.add_argument("--alpha", default="0")
    lim.add_argument("--L", type=float)
    lim.add_argument("--H", type=float)
    lim.add_argument("--seed", type=int, default=0)
    lim.add_argument("--k", type=int, default=0)
    lim.add_argument("--estimate-h", type=float, help="also estimate E xi_k((0,h))")
    lim.add_argument("--mc", type=int, default=1000)
    lim.add_argument("--grid-points", type=int, default=201)
    lim.set_defaults(func=cmd_limit)

    c = sub.add_parser("constants", help="limit constants of the expectation and variance asymptotics")
    common(c)
    c.add_argument("--d", type=int, default=2)
    c.add_argument("--alpha", default="0")
    c.add_argument("--k", type=int, default=0)
    c.add_argument("--mc", type=int, default=2000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--skip-variance", action="store_true")
    c.set_defaults(func=cmd_constants)

    v = sub.add_parser("verify", help="check the analytic identities")
    common(v)
    v.add_argument("--perturb-kappa", type=float, default=0.0, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())


