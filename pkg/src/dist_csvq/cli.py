"""Command-line front end.

    dist-csvq run          --config experiment.cfg [--out sweep.csv] [--plot]
    dist-csvq train        --config system.cfg --out system.npz
    dist-csvq evaluate     --system system.npz [--out eval.csv]
    dist-csvq bound        --config system.cfg [--dcs VALUE]
    dist-csvq estimate-dcs --config system.cfg [--estimator mmse|oracle]
    dist-csvq plot         --csv a.csv [b.csv ...] --out figure.png

Common overrides: --seed (base PRNG seed), --samples (training and
evaluation sample counts).  Exit codes: 0 success, 2 configuration error,
3 numerical error, 4 I/O error.
"""

import argparse
import sys as _sys
from dataclasses import replace

from .bounds import dq_lower_bound, end_to_end_lower_bound, rate_offset
from .config import ConfigError, ExperimentSpec, load_config
from .dvq import evaluate_end_to_end, train
from .estimator import NumericalError, estimate_dcs
from .experiments import ExperimentError, header_for, run_experiment, _fmt, ExperimentRow, _row_line
from .model import build_sensing_pair, substream, DCS_STREAM
from .sysio import SystemFileError, load_system, save_system

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _load_spec(path, want):
    cfg = load_config(path)
    is_spec = isinstance(cfg, ExperimentSpec)
    if want == "experiment" and not is_spec:
        raise ConfigError(f"{path}: expected an experiment config (kind=...)")
    if want == "system" and is_spec:
        raise ConfigError(f"{path}: expected a system config, found an experiment")
    return cfg


def _apply_overrides(cfg, args):
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        kw["n_train"] = args.samples
        kw["n_eval"] = args.samples
    return replace(cfg, **kw) if kw else cfg


def _cmd_run(args):
    spec = _load_spec(args.config, "experiment")
    out = args.out or spec.out or f"{spec.kind}.csv"
    progress = print if not args.quiet else None
    result = run_experiment(
        spec, out, seed=args.seed, samples=args.samples, progress=progress
    )
    if not args.quiet:
        for path in result.csv_paths:
            print(f"wrote {path}")
    if args.plot:
        from .plots import figure_path_for, render_experiment_csv

        xlabel = "R (bits/vector)" if spec.kind == "d-vs-rate" else "rho"
        logx = spec.kind != "d-vs-rate"
        fig = render_experiment_csv(
            result.csv_paths, figure_path_for(out), xlabel=xlabel, logx=logx
        )
        if not args.quiet:
            print(f"wrote {fig}")
    return EXIT_OK


def _cmd_train(args):
    cfg = _apply_overrides(_load_spec(args.config, "system"), args)
    sys_ = train(cfg, verbose=not args.quiet)
    out = args.out or "system.npz"
    save_system(sys_, out)
    if not args.quiet:
        state = "converged" if sys_.converged else "NOT converged"
        print(
            f"trained in {sys_.n_sweeps} sweeps ({state}); "
            f"surrogate cost {sys_.history[-1]:.6g}, training MSE {sys_.final_train_mse:.6g}"
        )
        print(f"wrote {out}")
    return EXIT_OK


def _cmd_evaluate(args):
    sys_ = load_system(args.system)
    cfg = _apply_overrides(sys_.cfg, args)
    sys_ = replace(sys_, cfg=cfg)
    ev = evaluate_end_to_end(sys_)
    dq_lb = dq_lower_bound(cfg.r_total, cfg.n, cfg.k, cfg.rho)
    bound = end_to_end_lower_bound(dq_lb, ev.d_cs)
    flags = []
    if rate_offset(cfg.r_total, cfg.n, cfg.k) < 0:
        flags.append("preasymptotic")
    if not sys_.converged:
        flags.append("nonconverged")
    if sys_.dec.n_unoccupied:
        flags.append(f"unoccupied={sys_.dec.n_unoccupied}")
    row = ExperimentRow(
        family_value=None, sweep_value=cfg.rho,
        d=ev.d, d_cs=ev.d_cs, d_q=ev.d_q, dq_lb=dq_lb, bound=bound,
        se_d=ev.se_d, se_dcs=ev.se_d_cs, se_dq=ev.se_d_q,
        d_oracle=float("nan"), se_doracle=float("nan"), flags=";".join(flags),
    )
    text = header_for("d-vs-rho") + "\n" + _row_line("d-vs-rho", row) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        if not args.quiet:
            print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_bound(args):
    cfg = _apply_overrides(_load_spec(args.config, "system"), args)
    dq_lb = dq_lower_bound(cfg.r_total, cfg.n, cfg.k, cfg.rho)
    print(f"dq_lb = {_fmt(dq_lb)}")
    if rate_offset(cfg.r_total, cfg.n, cfg.k) < 0:
        print("warning: R < log2 C(N, K); bound is pre-asymptotic")
    if args.dcs is not None:
        print(f"bound = {_fmt(end_to_end_lower_bound(dq_lb, args.dcs))}")
    return EXIT_OK


def _cmd_estimate_dcs(args):
    cfg = _apply_overrides(_load_spec(args.config, "system"), args)
    pair = build_sensing_pair(cfg.n, cfg.m)
    rng = substream(cfg.seed, DCS_STREAM)
    value, se = estimate_dcs(pair, cfg, args.estimator, cfg.n_eval, rng)
    print(f"D_cs({args.estimator}) = {_fmt(value)} (se {_fmt(se)}, n {cfg.n_eval})")
    return EXIT_OK


def _cmd_plot(args):
    from .plots import render_experiment_csv

    render_experiment_csv(
        args.csv, args.out, xlabel=args.xlabel, logx=not args.linear_x,
        logy=not args.linear_y,
    )
    if not args.quiet:
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dist-csvq",
        description="Distributed vector quantization of compressed-sensing measurements",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, samples=True):
        p.add_argument("--seed", type=int, default=None, help="override the base seed")
        if samples:
            p.add_argument(
                "--samples", type=int, default=None,
                help="override both training and evaluation sample counts",
            )
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("run", help="run an experiment sweep and write CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output CSV path (family suffixes added)")
    p.add_argument("--plot", action="store_true", help="also render a figure per CSV")
    common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("train", help="train a system and save it")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output system file (.npz)")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved system on held-out samples")
    p.add_argument("--system", required=True)
    p.add_argument("--out", default=None, help="output CSV path (prints when omitted)")
    common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("bound", help="evaluate the quantization lower bound")
    p.add_argument("--config", required=True)
    p.add_argument("--dcs", type=float, default=None,
                   help="CS distortion to combine into the end-to-end bound")
    common(p, samples=False)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("estimate-dcs", help="Monte-Carlo CS reconstruction distortion")
    p.add_argument("--config", required=True)
    p.add_argument("--estimator", choices=("mmse", "oracle"), default="mmse")
    common(p)
    p.set_defaults(func=_cmd_estimate_dcs)

    p = sub.add_parser("plot", help="render experiment CSVs to a figure")
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--xlabel", default="sweep")
    p.add_argument("--linear-x", action="store_true")
    p.add_argument("--linear-y", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ExperimentError) as exc:
        print(f"numerical error: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL
    except (SystemFileError, OSError) as exc:
        print(f"i/o error: {exc}", file=_sys.stderr)
        return EXIT_IO


def entry():
    _sys.exit(main())


if __name__ == "__main__":
    entry()
