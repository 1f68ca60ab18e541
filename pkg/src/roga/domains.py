"""Synthetic multi-domain binary classification data.

Each generator is a pure function of its descriptor. Domain streams use
PCG64 seeded with ``seed ^ domain_id`` so that any PCG64 implementation can
regenerate a benchmark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .diffcore import DomainBatch
from .errors import ConfigError


@dataclass(frozen=True)
class DomainDataset:
    features: np.ndarray
    labels: np.ndarray
    domain_id: int
    descriptor: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def as_batch(self) -> DomainBatch:
        return DomainBatch(self.features, self.labels, self.domain_id)

    def subset(self, idx) -> DomainBatch:
        return DomainBatch(self.features[idx], self.labels[idx], self.domain_id)


@dataclass(frozen=True)
class SplitPlan:
    train_domain_ids: tuple[int, ...]
    held_out_domain_id: int

    def __post_init__(self):
        ids = tuple(sorted(int(i) for i in self.train_domain_ids))
        object.__setattr__(self, "train_domain_ids", ids)
        if self.held_out_domain_id in ids:
            raise ValueError("held-out domain appears in the training set")
        if len(ids) < 2:
            raise ValueError("need at least two training domains")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _balanced_labels(n: int, rng: np.random.Generator) -> np.ndarray:
    labels = (np.arange(n) % 2).astype(np.float64)
    return rng.permutation(labels)


def make_rotated_moons(domain_angle: float, n: int, noise_sd: float, seed: int, domain_id: int = 0) -> DomainDataset:
    """Two interleaved half circles rotated about the origin by ``domain_angle``.

    Label 0 is the upper arc ``(cos t, sin t)``; label 1 the lower arc
    ``(1 - cos t, 0.5 - sin t)``, for ``t`` evenly spaced on ``[0, pi]``.
    """
    if n < 2 or noise_sd < 0:
        raise ValueError("need n >= 2 and noise_sd >= 0")
    rng = _rng(seed)
    n_upper = n // 2
    n_lower = n - n_upper
    t_up = np.linspace(0.0, math.pi, n_upper)
    t_low = np.linspace(0.0, math.pi, n_lower)
    x = np.concatenate(
        [
            np.column_stack([np.cos(t_up), np.sin(t_up)]),
            np.column_stack([1.0 - np.cos(t_low), 0.5 - np.sin(t_low)]),
        ]
    )
    y = np.concatenate([np.zeros(n_upper), np.ones(n_lower)])
    if noise_sd > 0:
        x = x + rng.normal(0.0, noise_sd, size=x.shape)
    c, s = math.cos(domain_angle), math.sin(domain_angle)
    x = x @ np.array([[c, s], [-s, c]])
    order = rng.permutation(n)
    descriptor = {
        "family": "rotated_moons",
        "domain_angle": float(domain_angle),
        "n": int(n),
        "noise_sd": float(noise_sd),
        "seed": int(seed),
        "domain_id": int(domain_id),
    }
    return DomainDataset(x[order], y[order], domain_id, descriptor)


def make_spurious_blobs(
    core_sep: float,
    spur_strength: float,
    spur_sign: int,
    n: int,
    d_noise: int,
    seed: int,
    domain_id: int = 0,
) -> DomainDataset:
    """Gaussian blobs with one invariant and one domain-specific coordinate.

    Feature 0 is ``core_sep * (2y-1)`` plus unit noise, feature 1 is
    ``spur_sign * spur_strength * (2y-1)`` plus unit noise, and the
    remaining ``d_noise`` features are pure unit noise.
    """
    if core_sep <= 0 or n < 2 or d_noise < 0:
        raise ValueError("need core_sep > 0, n >= 2 and d_noise >= 0")
    if spur_sign not in (1, -1):
        raise ValueError("spur_sign must be +1 or -1")
    rng = _rng(seed)
    y = _balanced_labels(n, rng)
    signed = 2.0 * y - 1.0
    noise = rng.standard_normal((n, 2 + d_noise))
    x = noise
    x[:, 0] += core_sep * signed
    x[:, 1] += spur_sign * spur_strength * signed
    descriptor = {
        "family": "spurious_blobs",
        "core_sep": float(core_sep),
        "spur_strength": float(spur_strength),
        "spur_sign": int(spur_sign),
        "n": int(n),
        "d_noise": int(d_noise),
        "seed": int(seed),
        "domain_id": int(domain_id),
    }
    return DomainDataset(x, y, domain_id, descriptor)


def standardize(ds: DomainDataset) -> DomainDataset:
    """Per-domain zero mean, unit variance features (constant columns left centred)."""
    mean = ds.features.mean(axis=0)
    sd = ds.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    descriptor = dict(ds.descriptor, standardized=True)
    return DomainDataset((ds.features - mean) / sd, ds.labels, ds.domain_id, descriptor)


def from_descriptor(descriptor: dict[str, Any]) -> DomainDataset:
    """Regenerate a dataset bitwise from its descriptor."""
    d = dict(descriptor)
    family = d.pop("family")
    std = d.pop("standardized", False)
    if family == "spurious_blobs":
        ds = make_spurious_blobs(**d)
    elif family == "rotated_moons":
        ds = make_rotated_moons(**d)
    else:
        raise ConfigError(f"unknown dataset family {family!r}")
    return standardize(ds) if std else ds


def leave_one_out_splits(domain_count: int) -> list[SplitPlan]:
    if domain_count < 3:
        raise ValueError("leave-one-out needs at least 3 domains")
    ids = range(domain_count)
    return [SplitPlan(tuple(i for i in ids if i != held), held) for held in ids]


class DomainBatchSampler:
    """Per-domain minibatches drawn without replacement within each pass.

    Every domain keeps its own permutation; when fewer than ``batch_size``
    unseen indices remain, a fresh permutation starts the next pass.
    """

    def __init__(self, datasets: Sequence[DomainDataset], batch_size: int, seed: int):
        self.datasets = sorted(datasets, key=lambda d: d.domain_id)
        for ds in self.datasets:
            if batch_size > len(ds):
                raise ConfigError(
                    f"batch_size {batch_size} exceeds size {len(ds)} of domain {ds.domain_id}"
                )
        if batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        self.batch_size = batch_size
        self._rngs = [
            np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), ds.domain_id, 1])))
            for ds in self.datasets
        ]
        self._perms = [np.empty(0, dtype=np.int64) for _ in self.datasets]
        self._cursors = [0 for _ in self.datasets]

    def sample(self) -> list[DomainBatch]:
        batches = []
        for k, ds in enumerate(self.datasets):
            if self._cursors[k] + self.batch_size > self._perms[k].shape[0]:
                self._perms[k] = self._rngs[k].permutation(len(ds))
                self._cursors[k] = 0
            idx = self._perms[k][self._cursors[k] : self._cursors[k] + self.batch_size]
            self._cursors[k] += self.batch_size
            batches.append(ds.subset(idx))
        return batches


def sample_domain_batches(sampler: DomainBatchSampler) -> list[DomainBatch]:
    """Advance ``sampler`` by one step: one batch per domain, ascending domain_id."""
    return sampler.sample()


def write_csv(ds: DomainDataset, path) -> None:
    d = ds.dim
    header = ",".join([f"f{j}" for j in range(d)] + ["label", "domain_id"])
    rows = np.column_stack([ds.features, ds.labels, np.full(len(ds), ds.domain_id)])
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row[:d]))
            fh.write(f",{int(row[d])},{int(row[d + 1])}\n")


def read_csv(path) -> DomainDataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[-2:] != ["label", "domain_id"]:
        raise ValueError(f"{path}: expected trailing label,domain_id columns")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    domain_ids = np.unique(data[:, -1])
    domain_id = int(domain_ids[0]) if domain_ids.size == 1 else -1
    return DomainDataset(data[:, :-2], data[:, -2], domain_id, {"source": str(path)})
