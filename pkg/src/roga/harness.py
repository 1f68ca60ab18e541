"""Experiment orchestration: configs, training loops, the ablation grid and run artifacts."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .diffcore import DomainBatch, ModelSpec, pool_batches
from .domains import (
    DomainBatchSampler,
    DomainDataset,
    SplitPlan,
    from_descriptor,
    leave_one_out_splits,
)
from .errors import ConfigError, NumericError
from .metrics import MetricsReport, accuracy, evaluate_scores
from .models import InitSpec, init_params, predict_scores
from .optim import OptimizerConfig, optimizer_step
from .probes import sharpness

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "sam", "roga")

DATASET_DEFAULTS: dict[str, dict[str, Any]] = {
    "spurious_blobs": {
        "n": 2000,
        "core_sep": 1.0,
        "d_noise": 8,
        "spur_strengths": [3.0, 3.0, 3.0, 3.0],
        "spur_signs": [1, 1, 1, -1],
        "seed": None,
        "standardize": True,
    },
    "rotated_moons": {
        "n": 500,
        "angles": [0.0, 0.5235987755982988, 1.0471975511965976, 1.5707963267948966],
        "noise_sd": 0.1,
        "seed": None,
        "standardize": True,
    },
}
MODEL_DEFAULTS = {"kind": "mlp", "hidden": [16, 16], "activation": "tanh", "init": "glorot_uniform"}
TOP_DEFAULTS = {
    "split": {"held_out": None},
    "epochs": 30,
    "batch_size": 50,
    "seeds": [0],
    "output_dir": "runs",
    "threads": 1,
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict[str, Any]
    model: dict[str, Any]
    optimizer: str
    optim: OptimizerConfig = OptimizerConfig()
    split: Any = None  # held-out domain id, or "all-leave-one-out"
    epochs: int = 30
    batch_size: int = 50
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs"
    threads: int = 1

    @property
    def domain_count(self) -> int:
        if self.dataset["family"] == "spurious_blobs":
            return len(self.dataset["spur_signs"])
        return len(self.dataset["angles"])

    def splits(self) -> list[SplitPlan]:
        if self.split == "all-leave-one-out":
            return leave_one_out_splits(self.domain_count)
        held = self.domain_count - 1 if self.split is None else int(self.split)
        return [SplitPlan(tuple(i for i in range(self.domain_count) if i != held), held)]

    def to_dict(self) -> dict[str, Any]:
        split = self.split if self.split == "all-leave-one-out" else {"held_out": self.split}
        return {
            "dataset": dict(self.dataset),
            "model": dict(self.model),
            "optimizer": {"kind": self.optimizer, **asdict(self.optim)},
            "split": split,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "threads": self.threads,
        }


def _merge(section: str, given: dict, defaults: dict) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key {section}.{unknown[0]}")
    return {**defaults, **given}


def parse_config(raw: dict[str, Any]) -> ExperimentConfig:
    """Validate a raw config mapping and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"dataset", "model", "optimizer", *TOP_DEFAULTS}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}")
    if "dataset" not in raw:
        raise ConfigError("missing key dataset")
    if "optimizer" not in raw:
        raise ConfigError("missing key optimizer")

    ds_raw = raw["dataset"]
    family = ds_raw.get("family") if isinstance(ds_raw, dict) else None
    if family not in DATASET_DEFAULTS:
        raise ConfigError(f"dataset.family must be one of {sorted(DATASET_DEFAULTS)}, got {family!r}")
    dataset = _merge("dataset", {k: v for k, v in ds_raw.items() if k != "family"}, DATASET_DEFAULTS[family])
    dataset = {"family": family, **dataset}
    if family == "spurious_blobs":
        if len(dataset["spur_strengths"]) != len(dataset["spur_signs"]):
            raise ConfigError("dataset.spur_strengths and dataset.spur_signs differ in length")
        if any(s not in (1, -1) for s in dataset["spur_signs"]):
            raise ConfigError("dataset.spur_signs entries must be +1 or -1")
        if dataset["core_sep"] <= 0:
            raise ConfigError("dataset.core_sep must be positive")
        count = len(dataset["spur_signs"])
    else:
        count = len(dataset["angles"])
    if count < 3:
        raise ConfigError(f"dataset: need at least 3 domains, got {count}")
    if not isinstance(dataset["n"], int) or dataset["n"] < 2:
        raise ConfigError("dataset.n must be an integer >= 2")

    model = _merge("model", raw.get("model", {}), MODEL_DEFAULTS)
    try:
        ModelSpec(model["kind"], (1, *([] if model["kind"] == "logistic" else model["hidden"]), 1), model["activation"])
        InitSpec(model["init"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from exc

    opt_raw = raw["optimizer"]
    if isinstance(opt_raw, str):
        opt_raw = {"kind": opt_raw}
    opt_defaults = {"kind": None, **asdict(OptimizerConfig())}
    opt = _merge("optimizer", opt_raw, opt_defaults)
    kind = opt.pop("kind")
    if kind not in OPTIMIZERS:
        raise ConfigError(f"optimizer.kind must be one of {list(OPTIMIZERS)}, got {kind!r}")
    try:
        optim = OptimizerConfig(**opt)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"optimizer: {exc}") from exc

    top = {k: raw.get(k, v) for k, v in TOP_DEFAULTS.items()}
    split = top["split"]
    if split == "all-leave-one-out":
        held = split
    else:
        split = _merge("split", split, {"held_out": None})
        held = split["held_out"]
        if held is not None and not (isinstance(held, int) and 0 <= held < count):
            raise ConfigError(f"split.held_out must be a domain id in [0, {count}), got {held!r}")
    if not isinstance(top["epochs"], int) or top["epochs"] < 1:
        raise ConfigError("epochs must be an integer >= 1")
    if not isinstance(top["batch_size"], int) or top["batch_size"] < 1:
        raise ConfigError("batch_size must be a positive integer")
    if top["batch_size"] > dataset["n"]:
        raise ConfigError(f"batch_size {top['batch_size']} exceeds domain size {dataset['n']}")
    seeds = top["seeds"]
    if isinstance(seeds, int):
        seeds = [seeds]
    if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a nonempty list of non-negative integers")
    if not isinstance(top["threads"], int) or top["threads"] < 1:
        raise ConfigError("threads must be an integer >= 1")

    return ExperimentConfig(
        dataset=dataset,
        model=model,
        optimizer=kind,
        optim=optim,
        split=held,
        epochs=top["epochs"],
        batch_size=top["batch_size"],
        seeds=tuple(seeds),
        output_dir=str(top["output_dir"]),
        threads=top["threads"],
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw)


def build_domains(config: ExperimentConfig, seed: int) -> list[DomainDataset]:
    """Generate every domain of the benchmark; the run seed is used when the dataset has none."""
    ds = config.dataset
    base = seed if ds["seed"] is None else ds["seed"]
    descriptors = []
    for i in range(config.domain_count):
        if ds["family"] == "spurious_blobs":
            d = {
                "family": "spurious_blobs",
                "core_sep": float(ds["core_sep"]),
                "spur_strength": float(ds["spur_strengths"][i]),
                "spur_sign": int(ds["spur_signs"][i]),
                "n": ds["n"],
                "d_noise": int(ds["d_noise"]),
            }
        else:
            d = {
                "family": "rotated_moons",
                "domain_angle": float(ds["angles"][i]),
                "n": ds["n"],
                "noise_sd": float(ds["noise_sd"]),
            }
        d.update(seed=int(base) ^ i, domain_id=i)
        if ds["standardize"]:
            d["standardized"] = True
        descriptors.append(d)
    return [from_descriptor(d) for d in descriptors]


def model_spec(config: ExperimentConfig, d: int) -> ModelSpec:
    m = config.model
    if m["kind"] == "logistic":
        return ModelSpec.logistic(d)
    return ModelSpec.mlp(d, m["hidden"], m["activation"])


def evaluate(spec: ModelSpec, params, dataset: DomainDataset | DomainBatch) -> MetricsReport:
    """All four metrics at threshold 0.5 on per-example scores."""
    return evaluate_scores(predict_scores(spec, params, dataset.features), dataset.labels)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    heldout_loss: float
    heldout: MetricsReport


@dataclass
class RunArtifacts:
    final_params: np.ndarray
    per_epoch: list[EpochRecord]
    step_diagnostics_summary: list[dict[str, float]]
    config_echo: dict[str, Any]
    wall_time_s: float
    model: ModelSpec = field(default_factory=ModelSpec)
    steps: int = 0


def steps_per_epoch(domain_size: int, batch_size: int) -> int:
    return domain_size // batch_size


def _diag_means(diags) -> dict[str, float]:
    def mean_of(attr):
        return float(np.mean([np.mean(getattr(d, attr)) for d in diags]))

    return {
        "loss": mean_of("per_domain_loss"),
        "perturbed_loss": mean_of("per_domain_perturbed_loss"),
        "alignment": mean_of("per_domain_alignment"),
        "grad_norm": mean_of("grad_norms"),
        "aggregate_grad_norm": float(np.mean([d.aggregate_grad_norm for d in diags])),
    }


def run_training(
    config: ExperimentConfig,
    seed: int,
    split: SplitPlan | None = None,
    optimizer: str | None = None,
    optim: OptimizerConfig | None = None,
) -> RunArtifacts:
    """Train on the split's training domains, evaluating the held-out domain every epoch.

    ``optimizer`` may additionally be ``"align"`` (alignment term without the
    perturbed loss), which only the ablation grid uses.
    """
    start = time.perf_counter()
    split = split or config.splits()[0]
    kind = optimizer or config.optimizer
    cfg = optim or config.optim
    domains = build_domains(config, seed)
    by_id = {d.domain_id: d for d in domains}
    train = [by_id[i] for i in split.train_domain_ids]
    heldout = by_id[split.held_out_domain_id]
    pooled_train = pool_batches([d.as_batch() for d in train])

    spec = model_spec(config, heldout.dim)
    theta = init_params(spec, InitSpec(config.model["init"], seed))
    velocity = np.zeros_like(theta)
    sampler = DomainBatchSampler(train, config.batch_size, seed)
    n_steps = steps_per_epoch(min(len(d) for d in train), config.batch_size)

    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 and kind in ("roga", "align") else None
    per_epoch, diag_summary, step = [], [], 0
    try:
        for epoch in range(1, config.epochs + 1):
            diags = []
            for _ in range(n_steps):
                batches = sampler.sample()
                try:
                    theta, velocity, diag = optimizer_step(kind, spec, theta, batches, cfg, velocity, executor)
                except NumericError as exc:
                    raise NumericError(f"step {step} (epoch {epoch}): {exc}") from exc
                diags.append(diag)
                step += 1
            summary = _diag_means(diags)
            train_scores = predict_scores(spec, theta, pooled_train.features)
            record = EpochRecord(
                epoch=epoch,
                train_loss=summary["loss"],
                train_acc=accuracy(train_scores, pooled_train.labels),
                heldout_loss=spec.loss(theta, heldout.as_batch()),
                heldout=evaluate(spec, theta, heldout),
            )
            if not math.isfinite(record.heldout_loss):
                raise NumericError(f"non-finite held-out loss after epoch {epoch}")
            per_epoch.append(record)
            diag_summary.append({"epoch": epoch, **summary})
            log.debug("epoch %d train_loss %.4f heldout_auc %.4f", epoch, record.train_loss, record.heldout.auc)
    finally:
        if executor is not None:
            executor.shutdown()

    echo = config.to_dict()
    echo["optimizer"] = {"kind": kind, **asdict(cfg)}
    echo.update(seeds=[seed], split={"held_out": split.held_out_domain_id})
    echo["train_domain_ids"] = list(split.train_domain_ids)
    return RunArtifacts(
        final_params=theta,
        per_epoch=per_epoch,
        step_diagnostics_summary=diag_summary,
        config_echo=echo,
        wall_time_s=time.perf_counter() - start,
        model=spec,
        steps=step,
    )


ABLATION_VARIANTS = ("a", "b", "c", "d")
ABLATION_LABELS = {
    "a": "base optimizer",
    "b": "+ perturbed loss",
    "c": "+ alignment",
    "d": "full RoGA",
}


def ablation_variant(variant: str, cfg: OptimizerConfig) -> tuple[str, OptimizerConfig]:
    """Optimizer kind and config for one row of the ablation grid."""
    if variant == "a":
        return "sgd", replace(cfg, rho=0.0, alpha=0.0)
    if variant == "b":
        return "roga", replace(cfg, alpha=0.0)
    if variant == "c":
        return "align", cfg
    if variant == "d":
        return "roga", cfg
    raise ValueError(f"unknown ablation variant {variant!r}")


@dataclass
class AblationResult:
    rows: list[dict[str, Any]]
    runs: dict[tuple[str, int], dict[str, Any]]


def run_ablation(
    config: ExperimentConfig,
    sharpness_rho: float | None = 0.1,
    sharpness_restarts: int = 5,
    sharpness_iters: int = 20,
) -> AblationResult:
    """Four variants per seed; held-out AUC/ACC/loss/EER averaged over seeds.

    When ``sharpness_rho`` is set, the rho-ball sharpness of each final model
    on its pooled training data is recorded too.
    """
    split = config.splits()[0]
    runs: dict[tuple[str, int], dict[str, Any]] = {}
    for variant in ABLATION_VARIANTS:
        kind, cfg = ablation_variant(variant, config.optim)
        for seed in config.seeds:
            art = run_training(config, seed, split, kind, cfg)
            last = art.per_epoch[-1]
            run = {
                "variant": variant,
                "seed": seed,
                "auc": last.heldout.auc,
                "acc": last.heldout.acc,
                "loss": last.heldout_loss,
                "eer": last.heldout.eer,
                "train_acc": last.train_acc,
                "artifacts": art,
            }
            if sharpness_rho is not None:
                domains = build_domains(config, seed)
                pooled = pool_batches([domains[i].as_batch() for i in split.train_domain_ids])
                res = sharpness(art.model, art.final_params, pooled, sharpness_rho, sharpness_iters, sharpness_restarts, seed)
                run["sharpness"] = res.sharpness
            runs[(variant, seed)] = run
            log.info("variant %s seed %d auc %.4f", variant, seed, run["auc"])

    metrics = ["auc", "acc", "loss", "eer", "train_acc"] + (["sharpness"] if sharpness_rho is not None else [])
    rows = []
    for variant in ABLATION_VARIANTS:
        row: dict[str, Any] = {"variant": variant, "label": ABLATION_LABELS[variant], "n_seeds": len(config.seeds)}
        for m in metrics:
            values = np.array([runs[(variant, s)][m] for s in config.seeds])
            row[m] = float(values.mean())
            row[f"{m}_std"] = float(values.std(ddof=1)) if values.size > 1 else 0.0
        rows.append(row)
    return AblationResult(rows, runs)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def params_payload(spec: ModelSpec, params) -> dict[str, Any]:
    return {
        "model": {"kind": spec.kind, "layer_widths": list(spec.layer_widths), "activation": spec.activation},
        "params": [float(v) for v in params],
    }


def load_params(path) -> tuple[ModelSpec, np.ndarray]:
    path = Path(path)
    if path.is_dir():
        path = path / "params.json"
    payload = json.loads(path.read_text())
    m = payload["model"]
    spec = ModelSpec(m["kind"], tuple(m["layer_widths"]), m["activation"])
    params = np.asarray(payload["params"], dtype=np.float64)
    if params.shape[0] != spec.n_params:
        raise ConfigError(f"{path}: {params.shape[0]} parameters for a model with {spec.n_params}")
    return spec, params


def emit_results(artifacts: RunArtifacts, output_dir) -> None:
    """Write run_summary.json, curves.csv, diagnostics.csv, params.json and timing.json.

    Everything except timing.json is a deterministic function of the artifacts.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    last = artifacts.per_epoch[-1]
    summary = {
        "config": artifacts.config_echo,
        "final": {
            "epoch": last.epoch,
            "train_loss": last.train_loss,
            "train_acc": last.train_acc,
            "heldout_loss": last.heldout_loss,
            "heldout": last.heldout.to_dict(),
        },
        "steps": artifacts.steps,
    }
    _write(out / "run_summary.json", _dumps(summary))
    _write(out / "timing.json", _dumps({"wall_time_s": artifacts.wall_time_s}))
    _write(out / "params.json", _dumps(params_payload(artifacts.model, artifacts.final_params)))

    curve_rows = [
        [r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.heldout_loss),
         repr(r.heldout.acc), repr(r.heldout.auc), repr(r.heldout.ap), repr(r.heldout.eer)]
        for r in artifacts.per_epoch
    ]
    header = ["epoch", "train_loss", "train_acc", "heldout_loss", "heldout_acc", "heldout_auc", "heldout_ap", "heldout_eer"]
    _write(out / "curves.csv", _csv_text(header, curve_rows))

    keys = ["epoch", "loss", "perturbed_loss", "alignment", "grad_norm", "aggregate_grad_norm"]
    diag_rows = [[d["epoch"]] + [repr(d[k]) for k in keys[1:]] for d in artifacts.step_diagnostics_summary]
    _write(out / "diagnostics.csv", _csv_text(keys, diag_rows))


def emit_ablation(result: AblationResult, output_dir) -> None:
    out = Path(output_dir)
    os.makedirs(out, exist_ok=True)
    header = list(result.rows[0])
    _write(out / "ablation.csv", _csv_text(header, [[row[k] for k in header] for row in result.rows]))
    per_run = [
        {k: v for k, v in run.items() if k != "artifacts"}
        for _, run in sorted(result.runs.items())
    ]
    _write(out / "ablation.json", _dumps({"rows": result.rows, "runs": per_run}))
