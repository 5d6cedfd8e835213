"""Leave-one-out experiments, baselines, ablations and report assembly.

Every target is processed independently.  Its random streams (synthetic
pool, k-means initialisation, network training) are derived from the
campaign seed and a hash of the target id, so results do not depend on the
order of the corpus or on how targets are scheduled across workers.
"""
from __future__ import annotations

import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, plots
from .config import POOL_MODES, ExperimentConfig
from .corpus import DefectSeries, Source, load_corpus, split_half
from .errors import DscError
from .forecaster import fit_forecaster, forecast
from .similarity import build_matrix, cluster_and_select
from .srgm import fit_all, mean_value, pick_best
from .stats import METRICS, MetricTriple, friedman, median, metrics, wilcoxon_signed_rank, wtl
from .synthgen import SynthConfig, generate_pool, pool_manifest

log = logging.getLogger(__name__)

_STREAMS = {"synth": 1, "cluster": 2, "train": 3}


def derive_seed(seed: int, target_id: str, stream: str) -> int:
    key = zlib.crc32(target_id.encode("utf-8"))
    ss = np.random.SeedSequence([seed, key, _STREAMS[stream]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class Outcome:
    variant: str
    status: str = "ok"  # ok | failed
    forecast: Optional[list] = None
    metrics: Optional[MetricTriple] = None
    selected_ids: list = field(default_factory=list)
    fallback: bool = False
    error: Optional[str] = None
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "status": self.status,
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "selected_ids": list(self.selected_ids),
            "fallback": self.fallback,
            "error": self.error,
            "forecast": self.forecast,
            "details": self.details,
        }


def _score(variant, split, pred, **kw) -> Outcome:
    return Outcome(
        variant=variant,
        forecast=[float(v) for v in pred],
        metrics=metrics(split.holdout.counts, pred),
        **kw,
    )


def synthetic_pool_for(target: DefectSeries, config: ExperimentConfig) -> list:
    synth = replace(config.synth, seed=derive_seed(config.seed, target.id, "synth"))
    return generate_pool(synth)


def run_pipeline(target: DefectSeries, candidates: list, config: ExperimentConfig,
                 variant: str = "DSC") -> Outcome:
    """Similarity clustering over candidates + target prefix, train, forecast, score."""
    split = split_half(target)
    observed = split.observed
    cand_ids = [c.id for c in candidates]
    if target.id in cand_ids:
        raise DscError(f"{target.id}: target appears in its own candidate pool")
    if not candidates:
        raise DscError(f"{target.id}: empty candidate pool")
    matrix = build_matrix([observed] + list(candidates))
    assignment = cluster_and_select(
        matrix, target.id, config.k, seed=derive_seed(config.seed, target.id, "cluster")
    )
    by_id = {c.id: c for c in candidates}
    selected = [by_id[i] for i in assignment.selected_ids]
    assert target.id not in assignment.selected_ids
    train_cfg = replace(config.train, seed=derive_seed(config.seed, target.id, "train"))
    model = fit_forecaster(selected, train_cfg)
    pred = forecast(model, observed, len(split.holdout), clamp=config.clamp)
    return _score(
        variant, split, pred,
        selected_ids=list(assignment.selected_ids),
        fallback=assignment.fallback,
        details={
            "pool_mode": POOL_MODES.get(variant),
            "pool_size": len(candidates),
            "n_clusters": assignment.n_clusters,
            "collapsed": assignment.collapsed,
            "best_val_loss": model.best_val_loss,
            "epoch_of_best": model.epoch_of_best,
            "checkpoint_metric": model.checkpoint_metric,
        },
    )


def _real_candidates(target, real_pool):
    return [s for s in real_pool if s.id != target.id]


def run_dsc(target: DefectSeries, real_pool, config: ExperimentConfig,
            synthetic: Optional[list] = None) -> Outcome:
    """Train on synthetic series only; ``real_pool`` is ignored."""
    if synthetic is None:
        synthetic = synthetic_pool_for(target, config)
    return run_pipeline(target, synthetic, config, "DSC")


def run_dc(target: DefectSeries, real_pool, config: ExperimentConfig) -> Outcome:
    """Train on the other real series (leave-one-out)."""
    cands = _real_candidates(target, real_pool)
    if len(cands) < 2:
        raise DscError(f"{target.id}: real-only pool needs >= 2 other series, got {len(cands)}")
    return run_pipeline(target, cands, config, "DC")


def run_hybrid(target: DefectSeries, real_pool, config: ExperimentConfig,
               synthetic: Optional[list] = None) -> Outcome:
    """Select from the union of the other real series and the synthetic pool."""
    if synthetic is None:
        synthetic = synthetic_pool_for(target, config)
    real = _real_candidates(target, real_pool)
    clash = {s.id for s in real} & {s.id for s in synthetic}
    if clash:
        raise DscError(f"real and synthetic ids collide: {sorted(clash)}")
    return run_pipeline(target, real + synthetic, config, "Hybrid")


def run_baseline_srgm(target: DefectSeries, config: Optional[ExperimentConfig] = None) -> Outcome:
    """Best of six SRGMs fitted to the observed half, extrapolated over the holdout."""
    fit_cfg = (config or ExperimentConfig()).fit
    split = split_half(target)
    fits = fit_all(split.observed, fit_cfg)
    best = pick_best(fits, split.observed, fit_cfg)  # AllFitsFailed propagates
    pred = mean_value(best.spec, split.holdout.times.astype(np.float64))
    return _score(
        "BestSRGM", split, pred,
        details={
            "best_kind": best.kind.value,
            "fits": {k.value: r.to_dict() for k, r in fits.items()},
        },
    )


def run_naive(target: DefectSeries) -> Outcome:
    """Repeat the last observed cumulative count over the holdout."""
    split = split_half(target)
    pred = np.full(len(split.holdout), split.observed.counts[-1])
    return _score("Naive", split, pred)


def run_target(target: DefectSeries, corpus: list, config: ExperimentConfig) -> dict:
    """All requested variants for one target; module errors become failed outcomes."""
    outcomes = {}
    synthetic = None
    if any(POOL_MODES.get(v) in ("SyntheticOnly", "Hybrid") for v in config.variants):
        synthetic = synthetic_pool_for(target, config)
    for variant in config.variants:
        try:
            if variant == "DSC":
                out = run_dsc(target, corpus, config, synthetic)
            elif variant == "DC":
                out = run_dc(target, corpus, config)
            elif variant == "Hybrid":
                out = run_hybrid(target, corpus, config, synthetic)
            elif variant == "BestSRGM":
                out = run_baseline_srgm(target, config)
            else:
                out = run_naive(target)
        except DscError as exc:
            log.warning("%s / %s failed: %s", target.id, variant, exc)
            out = Outcome(variant, status="failed", error=f"{type(exc).__name__}: {exc}")
        outcomes[variant] = out
    return {"outcomes": outcomes, "synthetic": synthetic}


# ---------------------------------------------------------------- campaign


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.floating):
        return _clean(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=1, allow_nan=False)
        fh.write("\n")


def campaign_config(config: ExperimentConfig, n_real: int) -> ExperimentConfig:
    """Fix the synthetic pool size at multiplier x (corpus size - 1)."""
    count = config.synth_multiplier * max(n_real - 1, 0)
    return replace(config, synth=replace(config.synth, count_n=count))


def _job(args):
    target, corpus, config = args
    res = run_target(target, corpus, config)
    return target.id, res


def aggregate(per_target: dict, variants, threshold: float) -> dict:
    """Medians, pairwise WTL and significance tests over successful targets."""
    ids = sorted(per_target)
    ok = {v: [t for t in ids if per_target[t][v].ok] for v in variants}
    aggregates = {}
    for v in variants:
        aggregates[v] = {
            "n_targets": len(ok[v]),
            "excluded": [t for t in ids if t not in ok[v]],
            "median": {m: median([per_target[t][v].metrics.get(m) for t in ok[v]]) for m in METRICS},
        }
    pairs, tests = {}, {"wilcoxon": {}, "friedman": None}
    for i, a in enumerate(variants):
        for b in variants[i + 1:]:
            common = [t for t in ids if t in set(ok[a]) & set(ok[b])]
            key = f"{a}_vs_{b}"
            pairs[key] = {"n_targets": len(common)}
            tests["wilcoxon"][key] = {}
            for m in METRICS:
                ea = [per_target[t][a].metrics.get(m) for t in common]
                eb = [per_target[t][b].metrics.get(m) for t in common]
                pairs[key][m] = wtl(ea, eb, threshold).to_dict()
                med_a, med_b = median(ea), median(eb)
                pairs[key][m]["median_improvement_pct"] = (
                    100.0 * (med_b - med_a) / med_b if common and med_b > 0 else None
                )
                try:
                    p = wilcoxon_signed_rank(ea, eb) if common else None
                except DscError:
                    p = None
                tests["wilcoxon"][key][m] = p
    if len(variants) >= 3:
        common = [t for t in ids if all(t in set(ok[v]) for v in variants)]
        tests["friedman"] = {"variants": list(variants), "n_targets": len(common)}
        for m in METRICS:
            mat = [[per_target[t][v].metrics.get(m) for v in variants] for t in common]
            try:
                tests["friedman"][m] = friedman(mat) if len(common) >= 2 else None
            except DscError:
                tests["friedman"][m] = None
    return {"aggregates": aggregates, "wtl": pairs, "tests": tests}


def run_campaign(config: ExperimentConfig, corpus: Optional[list] = None,
                 write: bool = True) -> dict:
    """Leave-one-out over every corpus series; returns the report dict.

    Writes ``report.json``, ``per_target/*.json``, ``pools/*/manifest.json``
    and ``plots/*.svg`` under ``config.output_dir`` when ``write`` is set.
    """
    if corpus is None:
        if not config.corpus_dir:
            raise DscError("no corpus given and corpus_dir is unset")
        corpus = load_corpus(config.corpus_dir)
    corpus = sorted(corpus, key=lambda s: s.id)
    config = campaign_config(config, len(corpus))
    jobs = [(t, corpus, config) for t in corpus]
    workers = config.jobs or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = dict(ex.map(_job, jobs))
    else:
        results = dict(_job(j) for j in jobs)

    variants = list(config.variants)
    per_target = {tid: results[tid]["outcomes"] for tid in sorted(results)}
    summary = aggregate(per_target, variants, config.wtl_threshold)
    report = {
        "variants": variants,
        "targets": sorted(per_target),
        "per_target": {
            tid: {
                v: {
                    "status": o.status,
                    "metrics": None if o.metrics is None else o.metrics.to_dict(),
                    "selected_ids": list(o.selected_ids),
                    "fallback": o.fallback,
                    "error": o.error,
                }
                for v, o in outs.items()
            }
            for tid, outs in per_target.items()
        },
        **summary,
        "provenance": {
            "package_version": __version__,
            "config": config.provenance(),
            "corpus_ids": [s.id for s in corpus],
        },
    }
    report = _clean(report)
    if write:
        write_outputs(report, results, corpus, config)
    return report


def write_outputs(report: dict, results: dict, corpus: list, config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump(report, out / "report.json")
    by_id = {s.id: s for s in corpus}
    for tid, res in results.items():
        target = by_id[tid]
        body = {
            "target_id": tid,
            "length": len(target),
            "observed_length": math.ceil(len(target) / 2),
            "holdout": [float(c) for c in target.counts[math.ceil(len(target) / 2):]],
            "outcomes": {v: o.to_dict() for v, o in res["outcomes"].items()},
        }
        _dump(body, out / "per_target" / f"{tid}.json")
        if res["synthetic"] is not None:
            synth = replace(config.synth, seed=derive_seed(config.seed, tid, "synth"))
            _dump(pool_manifest(res["synthetic"], synth), out / "pools" / tid / "manifest.json")
    render_plots(report, out / "plots")
    return out / "report.json"


def render_plots(report: dict, plot_dir) -> list:
    plot_dir = Path(plot_dir)
    variants = report["variants"]
    written = []
    ids = report["targets"]
    for key, pair in report["wtl"].items():
        a, b = key.split("_vs_")
        for m in METRICS:
            xs, ys = [], []
            for t in ids:
                ra, rb = report["per_target"][t][a], report["per_target"][t][b]
                if ra["metrics"] and rb["metrics"]:
                    xs.append(rb["metrics"][m])
                    ys.append(ra["metrics"][m])
            written.append(plots.error_scatter(xs, ys, b, a, m, plot_dir / f"scatter_{key}_{m}.svg"))
    if len(variants) >= 2:
        for m in METRICS:
            tallies = {
                k.replace("_vs_", " vs "): (p[m]["wins"], p[m]["ties"], p[m]["losses"])
                for k, p in report["wtl"].items()
            }
            written.append(plots.wtl_bars(tallies, f"Win/Tie/Loss ({m.upper()})", plot_dir / f"wtl_{m}.svg"))
    return written


# ---------------------------------------------------------------- sweeps

ABLATIONS = {
    "threshold": ("termination_fraction", (0.85, 0.90, 0.95, 0.99)),
    "noise": ("noise_sd", (0.000, 0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007)),
}


def run_ablation(kind: str, config: ExperimentConfig, corpus: Optional[list] = None,
                 settings=None) -> dict:
    """Median DSC MAE for each termination threshold or noise level."""
    kind = kind.lower()
    if kind not in ABLATIONS:
        raise DscError(f"unknown ablation {kind!r}; choose from {sorted(ABLATIONS)}")
    param, default_settings = ABLATIONS[kind]
    settings = tuple(default_settings if settings is None else settings)
    if corpus is None:
        corpus = load_corpus(config.corpus_dir)
    base_out = Path(config.output_dir)
    rows = []
    for value in settings:
        cfg = replace(
            config,
            variants=("DSC",),
            synth=replace(config.synth, **{param: value}),
            output_dir=str(base_out / f"{kind}_{value:g}"),
        )
        rep = run_campaign(cfg, corpus)
        agg = rep["aggregates"]["DSC"]
        rows.append({
            param: value,
            "median": agg["median"],
            "n_targets": agg["n_targets"],
            "excluded": agg["excluded"],
        })
    result = {
        "ablation": kind,
        "parameter": param,
        "settings": list(settings),
        "median_mae": [r["median"]["mae"] for r in rows],
        "rows": rows,
        "provenance": {"package_version": __version__, "config": config.provenance()},
    }
    result = _clean(result)
    _dump(result, base_out / f"ablation_{kind}.json")
    plots.sweep_line(
        [f"{v:g}" for v in settings],
        [np.nan if v is None else v for v in result["median_mae"]],
        param, "median MAE", base_out / "plots" / f"ablation_{kind}.svg",
    )
    return result


def run_size_sweep(config: ExperimentConfig, corpus: Optional[list] = None,
                   multipliers=(1, 2, 3, 4, 5)) -> dict:
    """DSC medians as the synthetic pool grows to 2n..5n; WTL against 1n."""
    if corpus is None:
        corpus = load_corpus(config.corpus_dir)
    base_out = Path(config.output_dir)
    reports = {}
    for mult in multipliers:
        cfg = replace(config, variants=("DSC",), synth_multiplier=mult,
                      output_dir=str(base_out / f"size_{mult}n"))
        reports[mult] = run_campaign(cfg, corpus)
    base = multipliers[0]
    rows, wtl_rows = [], {}
    for mult in multipliers:
        rep = reports[mult]
        rows.append({"multiplier": mult, "median": rep["aggregates"]["DSC"]["median"]})
        if mult == base:
            continue
        common = [t for t in rep["targets"]
                  if reports[base]["per_target"][t]["DSC"]["metrics"]
                  and rep["per_target"][t]["DSC"]["metrics"]]
        wtl_rows[f"{base}n_vs_{mult}n"] = {
            m: wtl(
                [reports[base]["per_target"][t]["DSC"]["metrics"][m] for t in common],
                [rep["per_target"][t]["DSC"]["metrics"][m] for t in common],
                config.wtl_threshold,
            ).to_dict()
            for m in METRICS
        }
    result = _clean({"rows": rows, "wtl": wtl_rows,
                     "provenance": {"package_version": __version__, "config": config.provenance()}})
    _dump(result, base_out / "size_sweep.json")
    return result


# ---------------------------------------------------------------- benchmarks


def pseudo_real_corpus(n: int = 12, seed: int = 1000, noise_sd: float = 0.005,
                       min_length: int = 18, max_length: int = 100) -> list:
    """Stand-in corpus of SRGM-generated series treated as real projects.

    Drawn from its own seed, so the generating specs differ from those in
    any training pool.  Lengths are capped at 100 to resemble
    project-scale defect logs.
    """
    cfg = SynthConfig(count_n=n, noise_sd=noise_sd, min_length=min_length,
                      max_length=max_length, seed=seed)
    return [
        DefectSeries(s.id, s.times, s.counts, Source.REAL, s.generator)
        for s in generate_pool(cfg, prefix="pr")
    ]
