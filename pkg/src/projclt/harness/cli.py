"""Command-line entry point: ``projclt <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .. import bounds as B
from .. import moments as M
from ..estimators import density as D
from ..estimators import transport as T
from ..rng import Stream
from ..sources import source_from_spec
from ..stats import estimate_stats
from .config import ConfigError, load_config
from .runner import (EXIT_CONFIG, PlotSpecError, emit_plotdata, read_table, run_sweep, run_verify, write_report,
                     write_table, _json_safe)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the config-error code; argparse's own 2 would read as 'marginal'."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment config (JSON); the bundled default when omitted")
    p.add_argument("--seed", type=int, help="root seed, replaces root_seed from the config")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config key set to a JSON value, e.g. constants.thm2=0.001")
    p.add_argument("--out", default="projclt-out", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes (default from $PROJCLT_JOBS, else 1)")


def _point_args(p: argparse.ArgumentParser, need_p: bool = False):
    p.add_argument("--source", required=True, help="source name from the config, or an inline JSON spec")
    p.add_argument("--n", type=int, help="dimension (default: first grid value)")
    p.add_argument("--k", type=int, help="projection dimension (default: first grid value)")
    p.add_argument("--t", type=float, help="noise power (default: first grid value)")
    p.add_argument("--epsilon", type=float, help="truncation width (default: first grid value)")
    if need_p:
        p.add_argument("--p", type=float, required=True, help="moment order")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="projclt", description="Gaussian approximation of random projections: "
                                     "functionals, bounds, estimators and verification runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("stats", "alpha, beta_1, beta_2 of a source"),
                           ("moments", "m_p and its closed form where available"),
                           ("bounds", "every applicable bound at one grid point"),
                           ("estimate", "one Monte Carlo estimate")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _point_args(p, need_p=name == "moments")
        if name == "estimate":
            p.add_argument("--quantity", required=True,
                           choices=["expected_w2", "expected_kl", "marginal_kl", "mi_y_theta", "mi_x_y",
                                    "var_density_integral"])
    p = sub.add_parser("verify", help="run the configured checks and write report.json / report.csv")
    _common(p)
    p = sub.add_parser("sweep", help="tabulate functionals, bounds and estimates over the grid")
    _common(p)
    p = sub.add_parser("plotdata", help="extract an (x, y, y_err) series from a sweep table")
    p.add_argument("--input", required=True, help="sweep.csv written by the sweep subcommand")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--y-err", dest="y_err")
    p.add_argument("--log", action="store_true", help="log-scale request; falls back to the <y>_log column")
    p.add_argument("--where", action="append", default=[], metavar="COL=VALUE", help="row filter")
    p.add_argument("--out", required=True, help="output CSV path")
    return parser


def _resolve_point(args, cfg):
    g = cfg["grid"]
    pt = {"n": args.n or g["n"][0], "k": args.k or g["k"][0], "t": args.t or g["t"][0],
          "epsilon": args.epsilon or g["epsilon"][0]}
    if args.source in cfg["sources"]:
        spec = cfg["sources"][args.source]
    else:
        try:
            spec = json.loads(args.source)
        except json.JSONDecodeError:
            raise ConfigError(f"unknown source {args.source!r}; configured: {sorted(cfg['sources'])}") from None
    return source_from_spec(spec, pt["n"]), pt


def _emit(obj):
    print(json.dumps(_json_safe(obj), indent=2, sort_keys=True))


def _cmd_stats(args, cfg):
    src, pt = _resolve_point(args, cfg)
    b = cfg["budgets"]
    st = estimate_stats(src, b["n_samples"], b["n_pairs"], Stream((cfg["root_seed"],)))
    _emit({"source": src.label, "n": pt["n"], **st.as_dict()})
    return 0


def _cmd_moments(args, cfg):
    src, pt = _resolve_point(args, cfg)
    k, t, p = pt["k"], pt["t"], args.p
    est = M.m_p_mc(src, k, p, t, cfg["budgets"]["n_pairs"], Stream((cfg["root_seed"],)))
    out = {"k": k, "p": p, "t": t, "mc": est.value, "mc_se": est.se}
    if src.kind == "orthogonal-support":
        out["closed_form"] = M.m_p_orthogonal(src.closed_form["lam"], src.gamma, t, k, p)
    elif src.kind == "sphere-uniform":
        out["closed_form"] = M.m_p_sphere(src.n, src.gamma, t, k, p)
    _emit(out)
    return 0


def _cmd_bounds(args, cfg):
    src, pt = _resolve_point(args, cfg)
    b, c = cfg["budgets"], cfg["constants"]
    st = estimate_stats(src, b["n_samples"], b["n_pairs"], Stream((cfg["root_seed"],)))
    n, k, t, eps = pt["n"], pt["k"], pt["t"], pt["epsilon"]
    reps = [B.thm1_w2_bound(st.alpha, st.beta1, st.beta2, st.gamma, k, c["thm1"]),
            B.thm2_kl_bound(st.alpha, st.beta1, st.beta2, st.gamma, t, eps, k, c["thm2"]),
            B.thm2_optimize_epsilon(st.alpha, st.beta1, st.beta2, st.gamma, t, k, c["thm2"])[1],
            B.cor1_w2_bound(n, k, c["cor1"]),
            B.kl_marginal_bound(st.alpha, st.gamma, t, k)]
    if k == 1:
        reps.append(B.thm3_kl_k1_bound(st.alpha, st.beta1, t))
    if src.constant_norm:
        reps.append(B.thm4_kl_sphere_bound(st.mean_sq_norm_over_n, st.beta2, st.gamma, t, k))
        reps.append(B.thm5_w2_sphere_bound(st.mean_sq_norm_over_n, st.beta2, st.gamma, k, c["thm5"])[0])
    _emit({"stats": st.as_dict(), "bounds": [r.as_dict() for r in reps]})
    return 0


def _cmd_estimate(args, cfg):
    src, pt = _resolve_point(args, cfg)
    b = cfg["budgets"]
    k, t = pt["k"], pt["t"]
    s = Stream((cfg["root_seed"],))
    q = args.quantity
    if q == "expected_w2":
        rep = T.expected_w2(src, k, b["reps"], b["m_samples"], s)
    elif q == "var_density_integral":
        rep = D.var_density_integral(src, t, b["var_reps"], b["m_inner"], s)
    else:
        fn = {"expected_kl": D.expected_kl, "marginal_kl": D.marginal_kl, "mi_y_theta": D.mi_y_theta,
              "mi_x_y": D.mi_x_y}[q]
        rep = fn(src, t, k, b["reps"], b["n_outer"], b["m_inner"], s)
    _emit(rep.as_dict())
    return 0


def _cmd_verify(args, cfg):
    rows, status, meta = run_verify(cfg, args.jobs)
    jpath, cpath = write_report(args.out, cfg, rows, status, meta)
    counts = {v: sum(1 for r in rows if r["verdict"] == v) for v in ("holds", "holds-marginal", "violated")}
    for r in rows:
        if r["verdict"] != "holds":
            print(f"{r['verdict']:15s} {r['check']} {r['variant']} {r['source']} margin={r['margin']:.2f}",
                  file=sys.stderr)
    print(f"{len(rows)} rows: {counts['holds']} hold, {counts['holds-marginal']} marginal, "
          f"{counts['violated']} violated; wrote {jpath} and {cpath}")
    return status


def _cmd_sweep(args, cfg):
    rows = run_sweep(cfg, args.jobs)
    path = write_table(Path(args.out) / "sweep.csv", rows)
    print(f"{len(rows)} rows written to {path}")
    return 0


def _cmd_plotdata(args):
    where = {}
    for item in args.where:
        if "=" not in item:
            raise ConfigError(f"--where {item!r} is not COL=VALUE")
        key, value = item.split("=", 1)
        where[key] = value
    path = emit_plotdata(read_table(args.input), args.x, args.y, args.out, args.y_err, args.log, where)
    print(f"wrote {path}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plotdata":
            return _cmd_plotdata(args)
        cfg = load_config(args.config, args.override, args.seed)
        handler = {"stats": _cmd_stats, "moments": _cmd_moments, "bounds": _cmd_bounds, "estimate": _cmd_estimate,
                   "verify": _cmd_verify, "sweep": _cmd_sweep}[args.command]
        return handler(args, cfg)
    except (ConfigError, PlotSpecError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
