"""Run the pipeline on SRGM-generated stand-in projects and print the summary.

    python scripts/pseudo_real_benchmark.py --targets 12 --epochs 50 --out out/pseudo
"""
import argparse
import json
import logging
from pathlib import Path

from dscsrgm.config import ExperimentConfig
from dscsrgm.corpus import save_series
from dscsrgm.forecaster import TrainConfig
from dscsrgm.harness import pseudo_real_corpus, run_campaign


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--targets", type=int, default=12)
    p.add_argument("--corpus-seed", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.005)
    p.add_argument("--max-length", type=int, default=100)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=0)
    p.add_argument("--variants", default="DSC,BestSRGM,Naive")
    p.add_argument("--out", default="out/pseudo")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)

    corpus = pseudo_real_corpus(args.targets, args.corpus_seed, args.noise,
                                max_length=args.max_length)
    out = Path(args.out)
    for s in corpus:
        save_series(s, out / "corpus" / f"{s.id}.json")
    cfg = ExperimentConfig(
        variants=tuple(args.variants.split(",")),
        train=TrainConfig(epochs=args.epochs),
        seed=args.seed, jobs=args.jobs, output_dir=str(out),
    )
    report = run_campaign(cfg, corpus)
    print(json.dumps({"aggregates": report["aggregates"], "wtl": report["wtl"]}, indent=1))


if __name__ == "__main__":
    main()
