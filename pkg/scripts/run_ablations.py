"""Termination-threshold and noise-level sweeps, then the pool-size sweep.

    python scripts/run_ablations.py --config configs/campaign.toml
"""
import argparse
import logging
from dataclasses import replace

from dscsrgm.config import load_config
from dscsrgm.harness import run_ablation, run_size_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True)
    p.add_argument("--skip-sizes", action="store_true", help="only the two ablations")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)

    cfg = load_config(args.config)
    for kind in ("threshold", "noise"):
        res = run_ablation(kind, cfg)
        for s, v in zip(res["settings"], res["median_mae"]):
            print(f"{kind} {s:g}: median MAE {v}")
    if not args.skip_sizes:
        res = run_size_sweep(replace(cfg, output_dir=f"{cfg.output_dir}/sizes"))
        for row in res["rows"]:
            print(f"{row['multiplier']}n: {row['median']}")


if __name__ == "__main__":
    main()
