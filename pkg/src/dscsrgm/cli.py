"""Command-line entry point: ``dscsrgm <subcommand> [options]``.

Exit codes: 0 success, 1 runtime error (JSON message on stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import VARIANTS, ExperimentConfig, load_config
from .corpus import load_corpus, load_series, split_half
from .errors import DscError
from .forecaster import TrainConfig, fit_forecaster, forecast, save_model
from .harness import (
    ABLATIONS, derive_seed, render_plots, run_ablation, run_campaign, run_size_sweep,
)
from .similarity import build_matrix, cluster_and_select
from .srgm import ALL_KINDS, fit_all, pick_best
from .stats import metrics
from .synthgen import SynthConfig, generate_pool, write_pool

_T = TrainConfig()
_S = SynthConfig()


def _emit(obj, out=None):
    text = json.dumps(obj, indent=1, allow_nan=False)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> int:
    cfg = replace(
        _S, count_n=args.count, seed=args.seed,
        termination_fraction=args.termination, noise_sd=args.noise,
        max_length=args.max_length,
    )
    pool = generate_pool(cfg)
    manifest = write_pool(pool, cfg, args.out)
    print(f"wrote {len(pool)} series and {manifest}")
    return 0


def cmd_fit(args) -> int:
    series = load_series(args.input)
    prefix = split_half(series).observed if args.half else series
    fits = fit_all(prefix)
    best = pick_best(fits, prefix)
    _emit({
        "series_id": series.id,
        "n_points": len(prefix),
        "fits": [fits[k].to_dict() for k in ALL_KINDS],
        "best_kind": best.kind.value,
        "best_mse": best.mse,
    }, args.out)
    return 0


def cmd_cluster(args) -> int:
    target = load_series(args.target)
    pool = [s for s in load_corpus(args.pool) if s.id != target.id]
    observed = split_half(target).observed if args.half else target
    matrix = build_matrix([observed] + pool)
    assign = cluster_and_select(matrix, target.id, args.k, seed=args.seed)
    out = {"assignment": assign.to_dict()}
    if args.matrix:
        out["matrix"] = matrix.to_dict()
    _emit(out, args.out)
    return 0


def cmd_predict(args) -> int:
    target = load_series(args.target)
    if args.pool:
        pool = [s for s in load_corpus(args.pool) if s.id != target.id]
    else:
        synth = replace(_S, count_n=args.count, seed=derive_seed(args.seed, target.id, "synth"))
        pool = generate_pool(synth)
    if args.horizon is None:
        split = split_half(target)
        observed, actual = split.observed, split.holdout.counts
        horizon = len(actual)
    else:
        observed, actual, horizon = target, None, args.horizon
    matrix = build_matrix([observed] + pool)
    assign = cluster_and_select(matrix, target.id, args.k,
                                seed=derive_seed(args.seed, target.id, "cluster"))
    by_id = {s.id: s for s in pool}
    tcfg = replace(
        _T, window=args.window, epochs=args.epochs, layers=args.layers, hidden=args.hidden,
        seed=derive_seed(args.seed, target.id, "train"),
    )
    model = fit_forecaster([by_id[i] for i in assign.selected_ids], tcfg)
    if args.save_model:
        save_model(model, args.save_model)
    pred = forecast(model, observed, horizon, clamp=args.clamp)
    out = {
        "target_id": target.id,
        "observed_length": len(observed),
        "horizon": horizon,
        "selected_ids": list(assign.selected_ids),
        "fallback": assign.fallback,
        "best_val_loss": model.best_val_loss,
        "forecast": [float(v) for v in pred],
    }
    if actual is not None:
        out["metrics"] = metrics(actual, pred).to_dict()
    _emit(out, args.out)
    return 0


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    for name in ("corpus_dir", "output_dir", "seed", "k", "jobs"):
        val = getattr(args, name, None)
        if val is not None:
            over[name] = val
    if getattr(args, "variants", None):
        over["variants"] = tuple(args.variants.split(","))
    if getattr(args, "multiplier", None) is not None:
        over["synth_multiplier"] = args.multiplier
    if getattr(args, "clamp", False):
        over["clamp"] = True
    cfg = replace(cfg, **over)
    tover = {k: getattr(args, k) for k in ("window", "epochs", "layers", "hidden") if getattr(args, k, None) is not None}
    if tover:
        cfg = replace(cfg, train=replace(cfg.train, **tover))
    return cfg


def cmd_campaign(args) -> int:
    cfg = _experiment_config(args)
    if args.sweep_sizes:
        res = run_size_sweep(cfg)
        for row in res["rows"]:
            print(f"{row['multiplier']}n  " + "  ".join(
                f"{m}={v:.4f}" if v is not None else f"{m}=n/a" for m, v in row["median"].items()))
        return 0
    report = run_campaign(cfg)
    _print_summary(report)
    print(f"report: {Path(cfg.output_dir) / 'report.json'}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _experiment_config(args)
    res = run_ablation(args.kind, cfg)
    for s, v in zip(res["settings"], res["median_mae"]):
        print(f"{res['parameter']}={s:g}  median MAE={v if v is None else format(v, '.4f')}")
    return 0


def cmd_report(args) -> int:
    with open(args.report, encoding="utf-8") as fh:
        report = json.load(fh)
    _print_summary(report)
    if args.plots:
        for p in render_plots(report, args.plots):
            print(p)
    return 0


def _print_summary(report: dict) -> None:
    print(f"{'variant':<10} {'n':>4} {'RMSE':>12} {'MAE':>12} {'MAPE':>10}")
    for v in report["variants"]:
        agg = report["aggregates"][v]
        med = agg["median"]
        cells = [f"{med[m]:.4f}" if med[m] is not None else "n/a" for m in ("rmse", "mae", "mape")]
        print(f"{v:<10} {agg['n_targets']:>4} {cells[0]:>12} {cells[1]:>12} {cells[2]:>10}")
    for key, pair in report["wtl"].items():
        w = pair["mae"]
        p = report["tests"]["wilcoxon"][key]["mae"]
        ptxt = "n/a" if p is None else f"{p:.4g}"
        print(f"{key}: MAE W/T/L {w['wins']}/{w['ties']}/{w['losses']}  Wilcoxon p={ptxt}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="dscsrgm", description=__doc__.splitlines()[0],
                                formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        sp.add_argument("--seed", type=int, default=None if name in ("campaign", "ablate") else 0,
                        help="master seed; every random stream derives from it")
        return sp

    sp = add("synth", "generate a synthetic defect-discovery pool")
    sp.add_argument("--count", type=int, default=_S.count_n, help="number of series")
    sp.add_argument("--termination", type=float, default=_S.termination_fraction,
                    help="stop once m(t) reaches this fraction of a")
    sp.add_argument("--noise", type=float, default=_S.noise_sd,
                    help="sd of the multiplicative Gaussian noise")
    sp.add_argument("--max-length", type=int, default=_S.max_length, help="length cap")
    sp.add_argument("--out", required=True, help="output directory (CSV files + manifest.json)")
    sp.set_defaults(func=cmd_synth)

    sp = add("fit", "fit all six SRGMs to a series and report the best by MSE")
    sp.add_argument("--input", required=True, help="CSV or JSON series")
    sp.add_argument("--half", action="store_true", help="fit only the first half of the series")
    sp.add_argument("--out", help="write JSON here instead of stdout")
    sp.set_defaults(func=cmd_fit)

    sp = add("cluster", "cluster a pool by cross-correlation and select the target's group")
    sp.add_argument("--target", required=True)
    sp.add_argument("--pool", required=True, help="directory of candidate series")
    sp.add_argument("--k", type=int, default=3, help="number of k-means clusters")
    sp.add_argument("--half", action="store_true", help="use only the target's first half")
    sp.add_argument("--matrix", action="store_true", help="include the similarity matrix")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_cluster)

    sp = add("predict", "train on the selected pool and forecast a target")
    sp.add_argument("--target", required=True)
    sp.add_argument("--pool", help="candidate directory; default: generate a synthetic pool")
    sp.add_argument("--count", type=int, default=_S.count_n, help="synthetic pool size")
    sp.add_argument("--horizon", type=int,
                    help="forecast this many steps past the full series "
                         "(default: hold out the second half and score it)")
    sp.add_argument("--k", type=int, default=3, help="number of k-means clusters")
    sp.add_argument("--window", type=int, default=_T.window, help="input window length")
    sp.add_argument("--epochs", type=int, default=_T.epochs, help="training epochs")
    sp.add_argument("--layers", type=int, default=_T.layers, help="stacked LSTM layers")
    sp.add_argument("--hidden", type=int, default=_T.hidden, help="hidden units per layer")
    sp.add_argument("--clamp", action="store_true", help="never let a forecast step decrease")
    sp.add_argument("--save-model", help="checkpoint directory")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_predict)

    for name, help_ in (("campaign", "run the leave-one-out campaign over a corpus"),
                        ("ablate", "sweep the termination threshold or noise level")):
        sp = add(name, help_)
        sp.add_argument("--config", help="TOML or JSON experiment config; flags override it")
        sp.add_argument("--corpus", dest="corpus_dir", help="directory of real series")
        sp.add_argument("--output-dir", help="where reports and plots go")
        sp.add_argument("--variants", help=f"comma list from {','.join(VARIANTS)}")
        sp.add_argument("--k", type=int, help="k-means clusters (config default 3)")
        sp.add_argument("--multiplier", type=int, help="synthetic pool = multiplier x (corpus - 1)")
        sp.add_argument("--window", type=int, help=f"input window (config default {_T.window})")
        sp.add_argument("--epochs", type=int, help=f"training epochs (config default {_T.epochs})")
        sp.add_argument("--layers", type=int, help=f"LSTM layers (config default {_T.layers})")
        sp.add_argument("--hidden", type=int, help=f"hidden units (config default {_T.hidden})")
        sp.add_argument("--clamp", action="store_true", help="non-decreasing forecasts")
        sp.add_argument("--jobs", type=int,
                        help="worker processes; 0 = all cores (config default 0)")
        if name == "campaign":
            sp.add_argument("--sweep-sizes", action="store_true",
                            help="run the 1n..5n synthetic pool size sweep instead")
            sp.set_defaults(func=cmd_campaign)
        else:
            sp.add_argument("--kind", required=True, choices=sorted(ABLATIONS))
            sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("report", help="summarise a report.json and optionally re-draw plots",
                        formatter_class=fmt)
    sp.add_argument("--report", required=True)
    sp.add_argument("--plots", help="directory for regenerated SVG plots")
    sp.add_argument("--seed", type=int, default=0, help="accepted for uniformity; unused")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DscError, OSError, ValueError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
