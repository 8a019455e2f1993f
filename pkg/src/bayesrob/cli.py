"""Command-line front end.

Exit codes: 0 ok, 1 verification failure, 2 usage error, 3 data error.

Distribution arguments accept a shipped name (normals_1d, step_1d, moons_2d),
a distribution spec file, or a grid file written by ``dist build``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import (
    DEFAULT_TAU,
    TAU_SENSITIVITY,
    bayes_error,
    compute_bounds,
    det_robust_bayes_error,
    prob_robust_upper_bound,
)
from .classifiers import (
    EXACT,
    MODES,
    bayes_classifier,
    constant_classifier,
    load_classifier,
    noisy_classifier,
    save_classifier,
    smoothed_bayes_classifier,
)
from .distributions import (
    GRID_FORMAT,
    SHIPPED,
    DistributionSpec,
    build_distribution,
    grid_from_dict,
    load_spec,
    save_grid,
    shipped_spec,
)
from .errors import (
    BayesRobError,
    DimUnsupported,
    DomainTooSmall,
    KappaOutOfRange,
    ModeUnsupported,
    MonotonicityViolation,
    UnsupportedNorm,
)
from .evaluation import compare_voting, evaluate, sample_size_study
from .kernels import VicinityKernel, format_p, parse_p
from .svg import LineChart

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3
USAGE_ERRORS = (KappaOutOfRange, UnsupportedNorm, ModeUnsupported, DimUnsupported)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Argument helpers


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _shape(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}; use e.g. 800,500") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list {text!r}; use e.g. 10,100,1000") from None


def parse_range(text: str) -> list[float]:
    """LO:HI:STEP, inclusive of HI when it lands on the step grid."""
    try:
        lo, hi, step = (float(s) for s in text.split(":"))
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected LO:HI:STEP") from None
    if step <= 0 or hi < lo:
        raise UsageError(f"bad range {text!r}; need STEP > 0 and HI >= LO")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


def load_distribution(source: str, shape=None):
    if source in SHIPPED:
        spec = shipped_spec(source)
    else:
        path = Path(source)
        if not path.is_file():
            raise UsageError(f"no such file: {path}")
        with open(path) as fh:
            data = json.load(fh)
        if data.get("format") == GRID_FORMAT:
            if shape is not None:
                raise UsageError("--shape applies to specs, not to built grid files")
            return grid_from_dict(data)
        spec = DistributionSpec.from_dict(data, base_dir=path.parent)
    if shape is not None:
        spec = spec.with_shape(shape)
    return build_distribution(spec)


def make_kernel(args, dim: int) -> VicinityKernel:
    try:
        p = parse_p(args.p)
    except (ValueError, UnsupportedNorm) as exc:
        raise UsageError(str(exc)) from None
    if not args.eps > 0:
        raise UsageError("--eps must be positive")
    return VicinityKernel(p, args.eps, dim)


def make_classifier(name: str, dist, kernel, rho: float, seed: int):
    if name == "bayes":
        return bayes_classifier(dist)
    if name == "smoothed":
        return smoothed_bayes_classifier(dist, kernel)
    if name == "noisy":
        return noisy_classifier(dist, rho, seed)
    if name.startswith("constant:"):
        return constant_classifier(dist, int(name.split(":", 1)[1]))
    path = Path(name)
    if not path.is_file():
        raise UsageError(f"unknown classifier {name!r} (bayes, smoothed, noisy, constant:K or a file)")
    return load_classifier(path)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])


def _sibling(path, suffix: str) -> Path:
    return Path(path).with_suffix(suffix)


def _add_kernel_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", default="inf", help="vicinity norm: 1, 2 or inf (default inf)")
    p.add_argument("--eps", type=float, default=0.15, help="vicinity radius (default 0.15)")


def _add_dist_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dist", required=True, help="shipped name, spec file or grid file")
    p.add_argument("--shape", type=_shape, help="grid resolution override, e.g. 800,500")


# ---------------------------------------------------------------------------
# Commands


def cmd_dist_build(args) -> int:
    path = Path(args.spec)
    if args.spec in SHIPPED:
        spec = shipped_spec(args.spec)
    elif not path.is_file():
        raise UsageError(f"no such spec file: {path}")
    else:
        spec = load_spec(path)
    if args.shape is not None:
        spec = spec.with_shape(args.shape)
    dist = build_distribution(spec)
    save_grid(dist, args.out)
    print(f"wrote {args.out}")
    print(f"kind={spec.kind} shape={list(dist.shape)} classes={dist.num_classes}")
    print(f"mass={dist.total_mass():.12f}")
    print(f"bayes_error={bayes_error(dist):.10f} accuracy_bound={1 - bayes_error(dist):.10f}")
    return EXIT_OK


def _tau_table(dist, kernel, kappas) -> list[tuple]:
    rows = []
    for tau in TAU_SENSITIVITY:
        b_d = det_robust_bayes_error(dist, kernel, tau)
        b_p = [prob_robust_upper_bound(dist, kernel, k, tau).error for k in kappas]
        rows.append((tau, b_d, b_p))
    return rows


def cmd_bound(args) -> int:
    if (args.kappa is None) == (args.kappa_range is None):
        raise UsageError("give exactly one of --kappa or --kappa-range")
    kappas = [args.kappa] if args.kappa is not None else parse_range(args.kappa_range)
    dist = load_distribution(args.dist, args.shape)
    kernel = make_kernel(args, dist.dim)
    try:
        report = compute_bounds(dist, kernel, kappas, args.tau)
    except MonotonicityViolation as exc:
        print(f"FATAL: {exc}; offending kappa pair {exc.pair}", file=sys.stderr)
        return EXIT_FAIL

    print(f"p={report.p} eps={report.epsilon:g} tau={report.tau:g} grid={report.grid_shape}")
    print(f"{'bound':<14}{'error':>14}{'accuracy':>14}")
    print(f"{'vanilla b_a':<14}{report.bayes_error:>14.6f}{report.vanilla_acc_bound:>14.6f}")
    print(f"{'det b_d':<14}{report.det_robust_error:>14.6f}{report.det_acc_bound:>14.6f}")
    if len(kappas) == 1:
        e = report.prob_robust_errors[0]
        print(f"{'prob b_p':<14}{e:>14.6f}{1 - e:>14.6f}  (kappa={kappas[0]:g}, "
              f"shrunk eps={report.shrunk_epsilons[0]:.6g})")
    else:
        print(f"sweep: {len(kappas)} kappas, accuracy bound "
              f"{report.prob_acc_bounds[0]:.6f} -> {report.prob_acc_bounds[-1]:.6f}")
    bad = report.ordering_violations()
    if bad:
        print(f"ordering b_a <= b_p <= b_d violated at kappa {bad}", file=sys.stderr)

    if args.tau_sensitivity:
        print("tau sensitivity:")
        for tau, b_d, b_p in _tau_table(dist, kernel, kappas[:1]):
            print(f"  tau={tau:<8g} b_d={b_d:.8f} b_p(kappa={kappas[0]:g})={b_p[0]:.8f}")

    if args.out:
        Path(args.out).write_text(report.dumps() + "\n")
        print(f"wrote {args.out}")
        if len(kappas) > 1:
            rows = list(zip(kappas, report.prob_acc_bounds))
            csv_path = _sibling(args.out, ".csv")
            _write_rows(csv_path, ["kappa", "prob_acc_bound"], rows)
            chart = LineChart(f"Accuracy bounds, p={report.p}, eps={report.epsilon:g}",
                              "kappa", "upper bound of accuracy")
            chart.add("probabilistic robust", kappas, report.prob_acc_bounds)
            chart.add("vanilla", [kappas[0], kappas[-1]], [report.vanilla_acc_bound] * 2, dashed=True)
            chart.add("deterministic robust", [kappas[0], kappas[-1]], [report.det_acc_bound] * 2, dashed=True)
            svg_path = _sibling(args.out, ".svg")
            chart.save(svg_path)
            print(f"wrote {csv_path} and {svg_path}")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_eval(args) -> int:
    dist = load_distribution(args.dist, args.shape)
    kernel = make_kernel(args, dist.dim)
    clf = make_classifier(args.classifier, dist, kernel, args.rho, args.seed)
    if args.save_classifier:
        save_classifier(clf, args.save_classifier)
    rep = evaluate(clf, dist, kernel, args.kappa, args.mode, args.m, args.seed)
    bounds = compute_bounds(dist, kernel, [args.kappa], args.tau)
    rows = [
        ("vanilla", rep.vanilla_acc, bounds.vanilla_acc_bound),
        ("det_robust", rep.det_robust_acc, bounds.det_acc_bound),
        ("prob_robust", rep.prob_robust_acc, bounds.prob_acc_bounds[0]),
    ]
    print(f"classifier={rep.classifier} p={rep.p} eps={rep.epsilon:g} kappa={rep.kappa:g} mode={rep.mode}")
    print(f"{'metric':<13}{'accuracy':>12}{'bound':>12}{'gap':>12}")
    for name, acc, bound in rows:
        print(f"{name:<13}{acc:>12.6f}{bound:>12.6f}{bound - acc:>12.6f}")
    if rep.mode != EXACT:
        print(f"prob_robust stderr={rep.prob_stderr:.6f} (m={rep.m}, seed={rep.seed})")
    if args.out:
        Path(args.out).write_text(json.dumps(
            {"report": rep.to_dict(), "bounds": bounds.to_dict(),
             "gap": {n: b - a for n, a, b in rows}}, indent=2) + "\n")
        _write_rows(_sibling(args.out, ".csv"), ["metric", "accuracy", "bound", "gap"],
                    [(n, a, b, b - a) for n, a, b in rows])
        print(f"wrote {args.out}")
    return EXIT_OK


def _seeds(args) -> list[int]:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    return [args.seed + i for i in range(args.seeds)]


def cmd_vote_compare(args) -> int:
    dist = load_distribution(args.dist, args.shape)
    kernel = make_kernel(args, dist.dim)
    inner = make_classifier(args.classifier, dist, kernel, args.rho, args.classifier_seed)
    cmp = compare_voting(inner, dist, kernel, args.kappa, args.m, _seeds(args))
    print(f"classifier={inner.variant} m={args.m} kappa={args.kappa:g} seeds={len(cmp.seeds)}")
    print(f"{'seed':>22}{'inner':>12}{'voting':>12}{'delta':>12}")
    for s, a, b, d in cmp.rows():
        print(f"{s:>22}{a:>12.6f}{b:>12.6f}{d:>+12.6f}")
    lo, hi = cmp.interval
    print(f"mean delta={cmp.mean_delta:+.6f}  95% interval [{lo:+.6f}, {hi:+.6f}]")
    if args.out:
        _write_rows(args.out, ["seed", "inner_acc", "voting_acc", "delta"], cmp.rows())
        Path(_sibling(args.out, ".json")).write_text(json.dumps(cmp.to_dict(), indent=2) + "\n")
        chart = LineChart("Probabilistic robust accuracy per seed", "seed", "accuracy")
        chart.add("inner", cmp.seeds, [cmp.inner_acc] * len(cmp.seeds), dashed=True)
        chart.add("voting", cmp.seeds, cmp.voting_accs)
        chart.save(_sibling(args.out, ".svg"))
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_sample_study(args) -> int:
    dist = load_distribution(args.dist, args.shape)
    kernel = make_kernel(args, dist.dim)
    inner = make_classifier(args.classifier, dist, kernel, args.rho, args.classifier_seed)
    try:
        rows = sample_size_study(inner, dist, kernel, args.kappa, args.m_list, args.trials, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"classifier={inner.variant} kappa={args.kappa:g} trials={args.trials}")
    print(f"{'m':>8}{'mean':>12}{'std':>12}")
    for r in rows:
        print(f"{r.m:>8}{r.mean:>12.6f}{r.std:>12.6f}")
    if args.out:
        _write_rows(args.out, ["m", "mean", "std", "trials"], [(r.m, r.mean, r.std, r.trials) for r in rows])
        chart = LineChart("Voting classifier vs sample size", "log10 m", "probabilistic robust accuracy")
        x = [math.log10(r.m) for r in rows]
        chart.add("mean", x, [r.mean for r in rows])
        chart.add("mean - std", x, [r.mean - r.std for r in rows], dashed=True)
        chart.add("mean + std", x, [r.mean + r.std for r in rows], dashed=True)
        chart.save(_sibling(args.out, ".svg"))
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_geom_profile(args) -> int:
    from .geometry import overlap_profile

    if args.dim not in (1, 2, 3):
        raise UsageError("--dim must be 1, 2 or 3")
    kernel = make_kernel(args, args.dim)
    phis = parse_range(args.phi_range) if args.phi_range else list(
        np.linspace(0.0, 2 * kernel.epsilon * math.sqrt(kernel.dim), 21))
    prof = overlap_profile(kernel, phis)
    print(f"{'phi':>12}{'overlap':>12}{'max_mu_change':>15}  direction")
    for phi, o, dmu, d in prof.rows():
        print(f"{phi:>12.6f}{o:>12.6f}{dmu:>15.6f}  {np.round(d, 6).tolist()}")
    if args.out:
        _write_rows(args.out, ["phi", "overlap", "max_mu_change"],
                    [(phi, o, dmu) for phi, o, dmu, _ in prof.rows()])
        chart = LineChart(f"Maximal mu change, p={format_p(kernel.p)}, n={kernel.dim}",
                          "shift phi", "max mu change")
        chart.add("max mu change", prof.phis, prof.mu_changes)
        chart.save(_sibling(args.out, ".svg"))
        print(f"wrote {args.out}")
    return EXIT_OK


def geometry_checks(eps: float, dims=(1, 2, 3), kappas=None) -> list[tuple[str, bool, str]]:
    """(name, passed, detail) for the geometry self-checks."""
    from .geometry import directional_derivative_bound, max_mu_change, min_adv_distance, overlap, solve_shrink_numeric

    kappas = kappas or [round(0.05 * i, 2) for i in range(1, 10)]
    out = []
    for n in dims:
        k = VicinityKernel(math.inf, eps, n)
        worst = 0.0
        for kap in kappas:
            closed = eps * (1 - (2 * kap) ** (1 / n))
            worst = max(worst, abs(solve_shrink_numeric(k, kap).radius - closed) / eps)
        out.append((f"shrink closed form n={n}", worst < 1e-6, f"max rel err {worst:.2e}"))
    k1 = VicinityKernel(math.inf, eps, 1)
    kap = 0.1
    d = min_adv_distance(k1, kap)
    out.append(("adv distance n=1", abs(d - eps * (1 - 2 * kap)) < 1e-8,
                f"{d:.9f} vs {eps * (1 - 2 * kap):.9f}"))
    k2 = VicinityKernel(math.inf, 0.5, 2)
    v = max_mu_change(k2, math.sqrt(2) * 0.5)
    out.append(("max mu change diagonal", abs(v - 0.75) < 1e-3, f"{v:.6f} vs 0.75"))
    o = overlap(k2, [0.5, 0.5])
    out.append(("box overlap", abs(o - 0.25) < 1e-12, f"{o:.6f} vs 0.25"))
    b1 = directional_derivative_bound(k1)
    out.append(("slope bound n=1", abs(b1 - 1 / (2 * eps)) < 1e-12, f"{b1:.6f} vs {1 / (2 * eps):.6f}"))
    b2 = directional_derivative_bound(VicinityKernel(math.inf, eps, 2))
    out.append(("slope bound n=2", math.isfinite(b2) and b2 >= (1 / (2 * eps)) * (1 - 1e-2),
                f"{b2:.6f} vs axis value {1 / (2 * eps):.6f}"))
    return out


def cmd_geom_verify(args) -> int:
    results = geometry_checks(args.eps, tuple(args.dims))
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bayesrob", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"bayesrob {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    dist = sub.add_parser("dist", help="distribution files")
    dsub = dist.add_subparsers(dest="dist_command", required=True)
    b = dsub.add_parser("build", help="build a grid distribution from a spec")
    b.add_argument("--spec", required=True, help="spec file or shipped name")
    b.add_argument("--out", required=True)
    b.add_argument("--shape", type=_shape)
    b.set_defaults(func=cmd_dist_build)

    bd = sub.add_parser("bound", help="vanilla, deterministic and probabilistic accuracy bounds",
                        description="Writes a JSON report to --out; sweeps also write OUT.csv "
                                    "(kappa, prob_acc_bound) and OUT.svg.")
    _add_dist_args(bd)
    _add_kernel_args(bd)
    g = bd.add_mutually_exclusive_group()
    g.add_argument("--kappa", type=float)
    g.add_argument("--kappa-range", help="LO:HI:STEP, e.g. 0:0.49:0.01")
    bd.add_argument("--tau", type=float, default=DEFAULT_TAU)
    bd.add_argument("--tau-sensitivity", action="store_true",
                    help=f"also report b_d and b_p for tau in {TAU_SENSITIVITY}")
    bd.add_argument("--out")
    bd.set_defaults(func=cmd_bound)

    ev = sub.add_parser("eval", help="evaluate a classifier against the bounds",
                        description="Columns: metric, accuracy, bound, gap (= bound - accuracy). "
                                    "--out writes JSON plus OUT.csv.")
    _add_dist_args(ev)
    _add_kernel_args(ev)
    ev.add_argument("--classifier", default="bayes", help="bayes, smoothed, noisy, constant:K or a file")
    ev.add_argument("--rho", type=float, default=0.15, help="flip rate of the noisy classifier")
    ev.add_argument("--kappa", type=float, default=0.1)
    ev.add_argument("--mode", choices=MODES, default=EXACT)
    ev.add_argument("--m", type=int, default=100)
    ev.add_argument("--seed", type=_seed, default=0)
    ev.add_argument("--tau", type=float, default=DEFAULT_TAU)
    ev.add_argument("--save-classifier", help="write the classifier's label grid here")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    for name, func, help_ in (
        ("vote-compare", cmd_vote_compare, "inner classifier vs its voting wrapper over seeds"),
        ("sample-study", cmd_sample_study, "voting accuracy spread as a function of m"),
    ):
        sp = sub.add_parser(name, help=help_)
        _add_dist_args(sp)
        _add_kernel_args(sp)
        sp.add_argument("--classifier", default="noisy")
        sp.add_argument("--rho", type=float, default=0.15)
        sp.add_argument("--classifier-seed", type=_seed, default=0)
        sp.add_argument("--kappa", type=float, default=0.1)
        sp.add_argument("--seed", type=_seed, default=0, help="first seed")
        sp.add_argument("--out", help="CSV table; an SVG is written beside it")
        sp.set_defaults(func=func)
        if name == "vote-compare":
            sp.description = "Columns: seed, inner_acc, voting_acc, delta."
            sp.add_argument("--m", type=int, default=100)
            sp.add_argument("--seeds", type=int, default=20, help="number of seeds")
        else:
            sp.description = "Columns: m, mean, std, trials."
            sp.add_argument("--m-list", type=_int_list, default=[10, 100, 1000])
            sp.add_argument("--trials", type=int, default=30)

    ge = sub.add_parser("geom", help="vicinity overlap geometry")
    gsub = ge.add_subparsers(dest="geom_command", required=True)
    pr = gsub.add_parser("profile", help="phi, overlap, max mu change",
                         description="Columns: phi, overlap, max_mu_change.")
    _add_kernel_args(pr)
    pr.add_argument("--dim", type=int, default=2)
    pr.add_argument("--phi-range", help="LO:HI:STEP")
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_geom_profile)
    ve = gsub.add_parser("verify", help="PASS/FAIL geometry self-checks")
    ve.add_argument("--eps", type=float, default=0.15)
    ve.add_argument("--dims", type=_int_list, default=[1, 2, 3])
    ve.set_defaults(func=cmd_geom_verify)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, *USAGE_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainTooSmall as exc:
        print(f"data error: {exc}; clipped mass {100 * exc.clipped_fraction:.3f}%", file=sys.stderr)
        return EXIT_DATA
    except (BayesRobError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
