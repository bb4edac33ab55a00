"""Per-epoch training traces: layer energies, weight and gradient norms.

Hidden layer ``k`` (1-based) is the output ``Y_k`` of weight matrix
``W_{k-1}``; its ``wnorm``/``gnorm`` columns refer to that matrix.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import frobenius_norm

METRIC_COLUMNS = ("train_loss", "val_loss", "test_loss", "train_acc", "val_acc", "test_acc")
LAYER_FIELDS = ("energy", "colE_min", "colE_mean", "colE_max", "wnorm", "gnorm")


@dataclass
class EpochTrace:
    epoch: int
    metrics: dict
    energy: list
    col_energy_min: list
    col_energy_mean: list
    col_energy_max: list
    weight_norm: list
    grad_norm: list
    zero_activation: list
    column_energies: list | None = None

    @property
    def hidden_depth(self) -> int:
        return len(self.energy)

    def row(self) -> list:
        vals = [self.epoch] + [self.metrics[k] for k in METRIC_COLUMNS]
        for k in range(self.hidden_depth):
            vals += [
                self.energy[k], self.col_energy_min[k], self.col_energy_mean[k],
                self.col_energy_max[k], self.weight_norm[k], self.grad_norm[k],
            ]
        return vals


@dataclass
class RunRecord:
    run_id: str
    config: dict
    seed: int
    epochs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    failed: bool = False
    failed_epoch: int | None = None
    best_params: object = field(default=None, repr=False)

    def append(self, trace: EpochTrace) -> None:
        if self.epochs and trace.epoch <= self.epochs[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        self.epochs.append(trace)

    def series(self, name: str, layer: int | None = None) -> np.ndarray:
        """Time series of a metric, or of a per-layer field for 1-based ``layer``."""
        if layer is None:
            return np.array([t.metrics[name] for t in self.epochs])
        attr = {
            "energy": "energy", "colE_min": "col_energy_min", "colE_mean": "col_energy_mean",
            "colE_max": "col_energy_max", "wnorm": "weight_norm", "gnorm": "grad_norm",
        }[name]
        return np.array([getattr(t, attr)[layer - 1] for t in self.epochs])


def snapshot_epoch(cache, grads, params, metrics, epoch=0, per_column=False) -> EpochTrace:
    """Summarise one training step from its forward cache and gradients."""
    energy, cmin, cmean, cmax, cols, zero = [], [], [], [], [], []
    for k, y in enumerate(cache.hidden):
        col = np.sum(y * y, axis=0)
        energy.append(float(np.sum(col)))
        cmin.append(float(col.min()))
        cmean.append(float(col.mean()))
        cmax.append(float(col.max()))
        zero.append(bool(cache.zero_energy[k]) or not np.any(y))
        if per_column:
            cols.append(col.tolist())
    n_hidden = len(cache.hidden)
    return EpochTrace(
        epoch=epoch,
        metrics={k: float(metrics[k]) for k in METRIC_COLUMNS},
        energy=energy,
        col_energy_min=cmin,
        col_energy_mean=cmean,
        col_energy_max=cmax,
        weight_norm=[frobenius_norm(w) for w in params.weights[:n_hidden]],
        grad_norm=[frobenius_norm(g) for g in grads.weights[:n_hidden]],
        zero_activation=zero,
        column_energies=cols if per_column else None,
    )


def csv_header(hidden_depth: int) -> list:
    head = ["epoch", *METRIC_COLUMNS]
    for k in range(1, hidden_depth + 1):
        head += [f"{f}_L{k}" for f in LAYER_FIELDS]
    return head


def format_value(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def write_csv(record: RunRecord, path) -> Path:
    """Write the trace: a header line, then one line per epoch."""
    path = Path(path)
    depth = record.epochs[0].hidden_depth if record.epochs else 0
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(csv_header(depth))
            for t in record.epochs:
                w.writerow([format_value(v) for v in t.row()])
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc
    return path


def read_csv(path) -> dict:
    """Column name -> numpy array for a trace written by :func:`write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(head)))
    return {h: data[:, j] for j, h in enumerate(head)}


def write_config(config: dict, path) -> Path:
    """Flat ``key = value`` snapshot, keys sorted."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for k in sorted(config):
            fh.write(f"{k} = {config[k]}\n")
    return path


def read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"{path}: malformed config line {line!r}")
            out[key.strip()] = val.strip()
    return out


def write_column_csv(record: RunRecord, path) -> Path:
    """Long-format per-column energies: ``epoch, layer, column, energy``.

    Only available when the run was traced with ``per_column=True``.
    """
    path = Path(path)
    if any(t.column_energies is None for t in record.epochs):
        raise ValueError("record has no per-column energies")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "layer", "column", "energy"])
        for t in record.epochs:
            for k, cols in enumerate(t.column_energies, start=1):
                for j, e in enumerate(cols):
                    w.writerow([t.epoch, k, j, format_value(e)])
    return path
