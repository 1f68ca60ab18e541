#!/usr/bin/env python3
"""Four-variant ablation on the spurious-blobs benchmark, optionally swept over epochs.

Usage:
  python scripts/run_ablation_benchmark.py
  python scripts/run_ablation_benchmark.py --epochs 5 30 100 --seeds 3 --out runs/sweep
"""

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from roga.harness import emit_ablation, load_config, run_ablation

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", default=str(ROOT / "configs" / "default.json"))
    parser.add_argument("--epochs", type=int, nargs="*", help="epoch counts to sweep (default: config value)")
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--seeds", type=int, help="use seeds 0..N-1")
    parser.add_argument("--out", default="runs/ablation")
    args = parser.parse_args()

    cfg = load_config(args.config)
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(range(args.seeds)))
    if args.batch_size:
        cfg = replace(cfg, batch_size=args.batch_size)

    summary = {}
    for epochs in args.epochs or [cfg.epochs]:
        run_cfg = replace(cfg, epochs=epochs)
        start = time.perf_counter()
        result = run_ablation(run_cfg)
        emit_ablation(result, Path(args.out) / f"epochs_{epochs}")
        print(f"epochs={epochs} batch_size={run_cfg.batch_size} seeds={len(run_cfg.seeds)} ({time.perf_counter() - start:.0f}s)")
        print(f"  {'variant':<22}{'AUC':>8}{'ACC':>8}{'Loss':>8}{'EER':>8}{'sharp':>9}")
        for row in result.rows:
            label = f"({row['variant']}) {row['label']}"
            print(f"  {label:<22}{row['auc']:8.4f}{row['acc']:8.4f}{row['loss']:8.4f}{row['eer']:8.4f}{row['sharpness']:9.5f}")
        summary[epochs] = {r["variant"]: r["auc"] for r in result.rows}
    (Path(args.out) / "auc_by_epochs.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
