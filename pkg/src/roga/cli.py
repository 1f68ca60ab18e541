"""Command-line entry point: gen-data, train, ablate, probe, eval.

Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .diffcore import DomainBatch
from .domains import read_csv, write_csv
from .errors import ConfigError, NumericError
from .probes import domain_gradient_cosine, loss_slice_1d, sharpness

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if getattr(args, "optimizer", None) is not None:
        cfg = replace(cfg, optimizer=args.optimizer)
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _out(args, cfg) -> Path:
    return Path(args.out if args.out is not None else cfg.output_dir)


def cmd_gen_data(args) -> None:
    cfg = _load(args)
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    domains = harness.build_domains(cfg, seed)
    for ds in domains:
        write_csv(ds, out / f"domain_{ds.domain_id}.csv")
    descriptors = {"seed": seed, "domains": [ds.descriptor for ds in domains]}
    (out / "descriptors.json").write_text(json.dumps(descriptors, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(domains)} domains to {out}")


def cmd_train(args) -> None:
    cfg = _load(args)
    out = _out(args, cfg)
    splits = cfg.splits()
    finals = []
    for split in splits:
        for seed in cfg.seeds:
            art = harness.run_training(cfg, seed, split)
            run_dir = out / f"heldout_{split.held_out_domain_id}" / f"seed_{seed}" if len(splits) > 1 else out / f"seed_{seed}"
            harness.emit_results(art, run_dir)
            last = art.per_epoch[-1]
            finals.append(last.heldout.auc)
            print(
                f"heldout={split.held_out_domain_id} seed={seed} optimizer={cfg.optimizer} "
                f"train_acc={last.train_acc:.4f} heldout_auc={last.heldout.auc:.4f} heldout_acc={last.heldout.acc:.4f}"
            )
    if len(finals) > 1:
        std = float(np.std(finals, ddof=1))
        print(f"mean heldout_auc={np.mean(finals):.4f} (sd {std:.4f}, n={len(finals)})")


def cmd_ablate(args) -> None:
    cfg = _load(args)
    out = _out(args, cfg)
    result = harness.run_ablation(cfg)
    harness.emit_ablation(result, out)
    print(f"{'variant':<22}{'AUC':>8}{'ACC':>8}{'Loss':>8}{'EER':>8}")
    for row in result.rows:
        label = f"({row['variant']}) {row['label']}"
        print(f"{label:<22}{row['auc']:8.4f}{row['acc']:8.4f}{row['loss']:8.4f}{row['eer']:8.4f}")


def _read_batch(path) -> DomainBatch:
    return read_csv(path).as_batch()


def cmd_probe(args) -> None:
    spec, params = harness.load_params(args.params)
    data = _read_batch(args.data)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    rows = ["rho,base_loss,max_perturbed_loss,sharpness,ascent_iters,restarts"]
    for rho in args.rho:
        r = sharpness(spec, params, data, rho, args.ascent_iters, args.restarts, args.seed or 0)
        rows.append(f"{r.rho!r},{r.base_loss!r},{r.max_perturbed_loss!r},{r.sharpness!r},{r.ascent_iters},{r.restarts}")
        print(f"rho={rho} sharpness={r.sharpness:.6g}")
    (out / "sharpness.csv").write_text("\n".join(rows) + "\n")

    rng = np.random.Generator(np.random.PCG64(args.seed or 0))
    directions = {"gradient": spec.grad(params, data), "random": rng.standard_normal(params.shape[0])}
    for name, direction in directions.items():
        if not np.any(direction):
            continue
        curve = loss_slice_1d(spec, params, direction, args.half_range, args.steps, data)
        lines = ["t,loss"] + [f"{t!r},{v!r}" for t, v in curve]
        (out / f"slice_{name}.csv").write_text("\n".join(lines) + "\n")

    if args.domains:
        batches = [_read_batch(p) for p in args.domains]
        cos = domain_gradient_cosine(spec, params, batches)
        np.savetxt(out / "gradient_cosine.csv", cos, delimiter=",", fmt="%.17g")


def cmd_eval(args) -> None:
    spec, params = harness.load_params(args.params)
    report = harness.evaluate(spec, params, read_csv(args.data))
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "metrics.json").write_text(text + "\n")
    print(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roga", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--threads", type=int, help="worker threads; 1 is fully deterministic")
        p.add_argument("--optimizer", choices=harness.OPTIMIZERS)
        p.set_defaults(func=func)
        return p

    experiment("gen-data", cmd_gen_data, "write domain CSVs and descriptors")
    experiment("train", cmd_train, "train one config over all seeds")
    experiment("ablate", cmd_ablate, "run the four-variant ablation grid")

    p = sub.add_parser("probe", help="sharpness and loss slices for saved params")
    p.add_argument("--params", required=True, help="params.json or a run directory")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--domains", nargs="*", help="per-domain CSVs for the gradient cosine matrix")
    p.add_argument("--rho", type=float, nargs="+", default=[0.01, 0.05, 0.1])
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--ascent-iters", type=int, default=20)
    p.add_argument("--half-range", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=41)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("eval", help="metrics of saved params on a dataset CSV")
    p.add_argument("--params", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
