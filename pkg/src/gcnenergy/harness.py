"""Training loop, ablation matrix, random hyperparameter search, theorem check."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import diagnostics
from .backprop import backward, output_gradient
from .data import Dataset, SyntheticSpec, resolve_dataset, row_normalize_features
from .graph import (
    apply_spectra_shift,
    build_renormalized_affinity,
    check_energy_loss,
    degree_root_vector,
    random_connected_graph,
)
from .model import ModelParams, PatchConfig, accuracy, forward, init_params, nll_loss
from .optim import Adam, NonFiniteGradient, apply_weight_norm

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class TrainConfig:
    depth: int = 10
    width: int = 16
    lr: float = 1e-3
    weight_decay: float = 5e-4
    patience: int = 200
    max_epochs: int = 10000
    runs: int = 20
    seed: int = 0
    patches: PatchConfig = field(default_factory=PatchConfig)
    data: str | None = None
    sbm: str | None = None
    normalize_features: bool = True

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.depth < 1 or self.width < 1:
            raise ValueError("depth and width must be positive")

    def replace(self, **changes) -> "TrainConfig":
        patch_keys = {f.name for f in fields(PatchConfig)}
        pc = {k: changes.pop(k) for k in list(changes) if k in patch_keys}
        cfg = replace(self, **changes)
        if pc:
            cfg = replace(cfg, patches=cfg.patches.replace(**pc))
        return cfg

    def to_flat(self) -> dict:
        """Flat ``key -> value`` view; patch fields sit beside the base ones."""
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "patches"}
        out.update(asdict(self.patches))
        return out

    @classmethod
    def from_flat(cls, flat: dict) -> "TrainConfig":
        """Inverse of :meth:`to_flat`; accepts the string values of a config file."""
        base_types = {f.name: f.type for f in fields(cls)}
        patch_types = {f.name: f.type for f in fields(PatchConfig)}
        base, patch = {}, {}
        for key, val in flat.items():
            key = key.replace("-", "_")
            if key in patch_types:
                patch[key] = _coerce(val, patch_types[key])
            elif key in base_types and key != "patches":
                base[key] = _coerce(val, base_types[key])
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(patches=PatchConfig(**patch), **base)


def _coerce(val, typ: str):
    if not isinstance(val, str):
        return val
    v = val.strip()
    if v in ("None", ""):
        return None
    if "bool" in typ:
        if v.lower() in ("true", "yes", "1", "y"):
            return True
        if v.lower() in ("false", "no", "0", "n"):
            return False
        raise ValueError(f"not a boolean: {val!r}")
    if "int" in typ and "float" not in typ:
        return int(v)
    if "float" in typ:
        return float(v)
    return v


class EarlyStopping:
    """Stop once the monitored loss has not improved for ``patience`` updates."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.bad = 0

    def update(self, value: float) -> bool:
        """Record ``value``; return True if it is a new best."""
        if value < self.best:
            self.best = value
            self.bad = 0
            return True
        self.bad += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad >= self.patience


def build_operator(graph, patches: PatchConfig):
    op = build_renormalized_affinity(graph)
    if patches.resolution is not None:
        op = apply_spectra_shift(op, patches.resolution)
    return op


def model_widths(cfg: TrainConfig, dataset: Dataset) -> list:
    return [dataset.X.shape[1]] + [cfg.width] * (cfg.depth - 1) + [dataset.n_classes]


def prepared_features(cfg: TrainConfig, dataset: Dataset, sparse_below: float = 0.1):
    """Optionally L1-normalised features, as CSR when density is below ``sparse_below``."""
    X = row_normalize_features(dataset.X) if cfg.normalize_features else dataset.X
    if np.count_nonzero(X) < sparse_below * X.size:
        return sp.csr_matrix(X)
    return X


def evaluate(cache, dataset: Dataset) -> dict:
    Z = dataset.Z
    out = {}
    for k in SPLITS:
        idx = dataset.splits[k]
        out[f"{k}_loss"] = nll_loss(cache.logits, Z, idx)
        out[f"{k}_acc"] = accuracy(cache.probs, dataset.labels, idx)
    return out


def _dropout_seed(seed, epoch):
    return [int(seed), int(epoch)]


def training_step(params, op, X, dataset, cfg: TrainConfig, seed, epoch):
    """Eval-mode metrics and train-mode gradients at the current parameters."""
    patches = cfg.patches
    eval_cache = forward(params, op, X, patches, mode="eval")
    metrics = evaluate(eval_cache, dataset)
    if patches.dropout > 0:
        cache = forward(params, op, X, patches, mode="train", seed=_dropout_seed(seed, epoch))
    else:
        cache = eval_cache
    train = dataset.splits["train"]
    grad_out = output_gradient(cache.probs, dataset.Z, train)
    grads = backward(cache, params, op, grad_out, patches)
    return eval_cache, metrics, grads


def train_run(cfg: TrainConfig, dataset: Dataset, seed: int, out_dir=None,
              run_id: str | None = None, per_column: bool = False) -> diagnostics.RunRecord:
    """Train one model until validation loss stalls for ``cfg.patience`` epochs.

    Epoch ``t`` records metrics and gradients at the parameters reached
    after ``t`` optimizer steps, so epoch 0 describes the initialization.
    The summary reports the epoch with the lowest validation loss; its
    parameters are kept in ``record.best_params`` and, when ``out_dir`` is
    given, written next to the trace and config snapshot.
    """
    run_id = run_id or f"run{seed}"
    patches = cfg.patches
    X = prepared_features(cfg, dataset)
    op = build_operator(dataset.graph, patches)
    params = init_params(model_widths(cfg, dataset), patches, seed)
    flags = []
    warm = [None] * len(params.weights)
    if patches.weight_norm is not None:
        flags += apply_weight_norm(params, patches.weight_norm, warm=warm)
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    stopper = EarlyStopping(cfg.patience)
    record = diagnostics.RunRecord(run_id, cfg.to_flat(), seed)
    best = None
    for epoch in range(cfg.max_epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            eval_cache, metrics, grads = training_step(params, op, X, dataset, cfg, seed, epoch)
        if not all(np.isfinite(v) for v in metrics.values()):
            record.failed, record.failed_epoch = True, epoch
            break
        record.append(diagnostics.snapshot_epoch(eval_cache, grads, params, metrics, epoch, per_column))
        if stopper.update(metrics["val_loss"]):
            best = (epoch, params.copy(), dict(metrics))
        if stopper.should_stop:
            break
        try:
            opt.step(params, grads)
        except NonFiniteGradient as exc:
            log.info("%s: %s at epoch %d", run_id, exc, epoch)
            record.failed, record.failed_epoch = True, epoch
            break
        if patches.weight_norm is not None and not patches.weight_norm_init_only:
            flags += apply_weight_norm(params, patches.weight_norm, warm=warm)
    record.best_params = best[1] if best else None
    if best is not None:
        record.summary = {"best_epoch": best[0], "epochs_run": len(record.epochs), **best[2]}
    record.summary["zero_weight_flags"] = len(flags)
    if out_dir is not None:
        save_run(record, cfg, out_dir)
    return record


def save_run(record, cfg: TrainConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    diagnostics.write_csv(record, out / f"{record.run_id}.trace.csv")
    if record.epochs and record.epochs[0].column_energies is not None:
        diagnostics.write_column_csv(record, out / f"{record.run_id}.colE.csv")
    conf = dict(cfg.to_flat(), run_seed=record.seed, run_id=record.run_id)
    conf["failed"] = record.failed
    if record.summary.get("best_epoch") is not None:
        conf["best_epoch"] = record.summary["best_epoch"]
    diagnostics.write_config(conf, out / f"{record.run_id}.config.txt")
    if record.best_params is not None:
        p = record.best_params
        arrays = {f"W{i}": w for i, w in enumerate(p.weights)}
        arrays.update({f"b{i}": b for i, b in enumerate(p.biases)})
        np.savez(out / f"{record.run_id}.ckpt.npz", epoch=record.summary["best_epoch"], **arrays)


# The ablation matrix: patch combinations with their constants.
TABLE1_VARIANTS = {
    "baseline": PatchConfig(),
    "tr1": PatchConfig(resolution=1.0),
    "init_normal1.8": PatchConfig(init_scheme="normal", init_const=1.8),
    "tr1_init_normal0.8": PatchConfig(resolution=1.0, init_scheme="normal", init_const=0.8),
    "wnorm7": PatchConfig(weight_norm=7.0),
    "enorm800": PatchConfig(energy_norm=800.0),
    "tr1_wnorm5": PatchConfig(resolution=1.0, weight_norm=5.0),
    "tr1_enorm550": PatchConfig(resolution=1.0, energy_norm=550.0),
    "tr1_skip": PatchConfig(resolution=1.0, skip=True),
    "skip_init_normal0.9": PatchConfig(skip=True, init_scheme="normal", init_const=0.9),
    "skip_wnorm7": PatchConfig(skip=True, weight_norm=7.0),
    "skip_enorm2900": PatchConfig(skip=True, energy_norm=2900.0),
    "tr1_skip_init_normal0.5": PatchConfig(resolution=1.0, skip=True, init_scheme="normal", init_const=0.5),
    "tr1_skip_wnorm3": PatchConfig(resolution=1.0, skip=True, weight_norm=3.0),
    "tr1_skip_enorm325": PatchConfig(resolution=1.0, skip=True, energy_norm=325.0),
}

# (train loss, train acc, test loss, test acc) reported for Cora, for side-by-side output
TABLE1_REPORTED = {
    "baseline": (1.946, 0.1429, 1.960, 0.2311),
    "tr1": (0.004, 0.9993, 4.608, 0.5710),
    "init_normal1.8": (0.106, 0.9807, 1.806, 0.6745),
    "tr1_init_normal0.8": (0.005, 1.0, 2.908, 0.6513),
    "wnorm7": (0.811, 0.7193, 1.184, 0.6468),
    "enorm800": (0.011, 1.0, 1.088, 0.6972),
    "tr1_wnorm5": (0.359, 0.8979, 1.562, 0.6435),
    "tr1_enorm550": (0.002, 1.0, 1.912, 0.6208),
    "tr1_skip": (0.008, 0.9993, 1.723, 0.6815),
    "skip_init_normal0.9": (0.034, 0.9979, 1.318, 0.7230),
    "skip_wnorm7": (0.378, 0.9543, 1.009, 0.7398),
    "skip_enorm2900": (0.003, 1.0, 1.543, 0.7128),
    "tr1_skip_init_normal0.5": (0.005, 1.0, 1.447, 0.6932),
    "tr1_skip_wnorm3": (0.193, 0.9850, 1.247, 0.6848),
    "tr1_skip_enorm325": (0.080, 1.0, 2.074, 0.7052),
}

ABLATION_METRICS = ("train_loss", "train_acc", "val_loss", "val_acc", "test_loss", "test_acc")


def _run_job(args):
    cfg, dataset, seed, out_dir, run_id = args
    rec = train_run(cfg, dataset, seed, out_dir=out_dir, run_id=run_id)
    rec.best_params = None  # keep inter-process payloads small
    return rec


def run_many(cfg: TrainConfig, dataset: Dataset, runs=None, out_dir=None, prefix="run", jobs=1):
    """``runs`` independent runs with seeds ``cfg.seed + i``."""
    runs = cfg.runs if runs is None else runs
    tasks = [
        (cfg, dataset, cfg.seed + i, out_dir, f"{prefix}_s{cfg.seed + i}") for i in range(runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_run_job, tasks))
    return [_run_job(t) for t in tasks]


@dataclass
class VariantSummary:
    variant: str
    stats: dict
    n_runs: int
    n_failed: int
    records: list = field(repr=False, default_factory=list)

    def mean(self, metric):
        return self.stats[metric][0]

    def std(self, metric):
        return self.stats[metric][1]


def summarize(variant: str, records) -> VariantSummary:
    ok = [r for r in records if not r.failed and r.summary.get("best_epoch") is not None]
    stats = {}
    for m in ABLATION_METRICS:
        vals = np.array([r.summary[m] for r in ok])
        stats[m] = (float(vals.mean()), float(vals.std())) if vals.size else (math.nan, math.nan)
    return VariantSummary(variant, stats, len(ok), len(records) - len(ok), list(records))


def write_summary(summaries, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "metric", "mean", "std", "n_runs", "n_failed"])
        for s in summaries:
            for m in ABLATION_METRICS:
                mu, sd = s.stats[m]
                w.writerow([s.variant, m, f"{mu:.9g}", f"{sd:.9g}", s.n_runs, s.n_failed])
    return path


def ablate(dataset: Dataset, base_cfg: TrainConfig, variants=None, out_dir=None, jobs=1):
    """Run every variant ``base_cfg.runs`` times and summarise the best-val checkpoints.

    ``variants`` maps a name to a :class:`PatchConfig`; it defaults to the
    full fifteen-variant matrix.
    """
    variants = TABLE1_VARIANTS if variants is None else variants
    summaries = []
    for name, patches in variants.items():
        cfg = replace(base_cfg, patches=patches)
        sub = None if out_dir is None else Path(out_dir) / name
        records = run_many(cfg, dataset, out_dir=sub, prefix=name, jobs=jobs)
        s = summarize(name, records)
        log.info("%s: test acc %.4f +- %.4f (%d ok, %d failed)", name,
                 *s.stats["test_acc"], s.n_runs, s.n_failed)
        summaries.append(s)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_summary(summaries, Path(out_dir) / "ablation_summary.csv")
    return summaries


@dataclass(frozen=True)
class SearchSpace:
    """Ranges for random search. ``(lo, hi)`` tuples; log-uniform where noted."""

    lr: tuple = (1e-6, 1e-1)
    weight_decay: tuple = (1e-5, 1e-1)
    width: tuple = tuple(range(100, 5001, 100))
    dropout: tuple = (0.0, 1.0)
    resolution: tuple = (-1.0, 5.0)
    init_const: tuple = (0.1, 5.0)
    weight_norm: tuple = (1.0, 15.0)
    energy_norm: tuple = (25.0, 2500.0)
    stall_candidates: int = 64

    LOG_SCALE = ("lr", "weight_decay")

    def sample(self, rng, tune) -> dict:
        """One candidate: base hyperparameters plus the patch constants in ``tune``."""
        out = {}
        for key in ("lr", "weight_decay", "dropout") + tuple(tune):
            lo, hi = getattr(self, key)
            if key in self.LOG_SCALE:
                val = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            else:
                val = rng.uniform(lo, hi)
            # exp(log(x)) is not always x; keep samples inside the range
            out[key] = float(min(max(val, lo), hi))
        if out["dropout"] >= 1.0:
            out["dropout"] = math.nextafter(1.0, 0.0)
        out["width"] = int(self.width[rng.integers(len(self.width))])
        return out


def tunable_patches(template: PatchConfig) -> tuple:
    """Patch constants searched for a template: the ones the template enables."""
    tune = []
    if template.resolution is not None:
        tune.append("resolution")
    if template.weight_norm is not None:
        tune.append("weight_norm")
    if template.energy_norm is not None:
        tune.append("energy_norm")
    if template.init_scheme == "normal" or template.init_const != 1.0:
        tune.append("init_const")
    return tuple(tune)


@dataclass
class SearchResult:
    best_config: TrainConfig
    best_score: float
    candidates: list
    final: VariantSummary | None


def random_search(dataset: Dataset, space: SearchSpace, template: PatchConfig, seed: int,
                  base_cfg: TrainConfig | None = None, quick_runs: int = 3,
                  final_runs: int | None = None, max_candidates: int = 1000,
                  time_budget: float | None = None, tune=None, jobs: int = 1,
                  out_dir=None) -> SearchResult:
    """Seeded random search standing in for Bayesian optimization.

    Each candidate is scored by mean validation accuracy over ``quick_runs``
    runs. The search ends after ``space.stall_candidates`` consecutive
    candidates fail to beat the best score, after ``max_candidates``, or
    when ``time_budget`` seconds have elapsed. The winner is re-run
    ``final_runs`` times (default ``base_cfg.runs``). With ``out_dir`` the
    candidate scores, the winning config and the final runs are written there.
    """
    base_cfg = base_cfg or TrainConfig()
    tune = tunable_patches(template) if tune is None else tuple(tune)
    rng = np.random.default_rng(seed)
    start = time.monotonic()
    best_cfg, best_score, stall = None, -math.inf, 0
    candidates = []
    while len(candidates) < max_candidates and stall < space.stall_candidates:
        if time_budget is not None and time.monotonic() - start > time_budget:
            break
        hp = space.sample(rng, tune)
        cfg = replace(base_cfg, patches=template).replace(**hp)
        recs = run_many(cfg, dataset, runs=quick_runs, jobs=jobs)
        ok = [r.summary["val_acc"] for r in recs if not r.failed and "val_acc" in r.summary]
        score = float(np.mean(ok)) if ok else -math.inf
        candidates.append((hp, score))
        if score > best_score:
            best_cfg, best_score, stall = cfg, score, 0
        else:
            stall += 1
    final = None
    if best_cfg is not None and (final_runs is None or final_runs > 0):
        n = base_cfg.runs if final_runs is None else final_runs
        sub = None if out_dir is None else Path(out_dir) / "final"
        final = summarize("search_best", run_many(best_cfg, dataset, runs=n, out_dir=sub,
                                                  prefix="best", jobs=jobs))
    result = SearchResult(best_cfg, best_score, candidates, final)
    if out_dir is not None:
        write_search(result, out_dir)
    return result


def write_search(result: SearchResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted({k for hp, _ in result.candidates for k in hp})
    with open(out / "candidates.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["candidate", *keys, "val_acc"])
        for i, (hp, score) in enumerate(result.candidates):
            vals = [diagnostics.format_value(hp[k]) for k in keys]
            w.writerow([i, *vals, diagnostics.format_value(score)])
    if result.best_config is not None:
        diagnostics.write_config(result.best_config.to_flat(), out / "best.config.txt")
    if result.final is not None:
        write_summary([result.final], out / "ablation_summary.csv")


@dataclass
class TheoremReport:
    trials: int
    violations: int
    max_equality_residual: float
    strict_losses: int
    margin_min: float
    margin_median: float
    margin_max: float

    @property
    def passed(self) -> bool:
        return (
            self.violations == 0
            and self.max_equality_residual <= 1e-12
            and self.strict_losses == self.trials
        )


def verify_theorem(trials=1000, max_nodes=50, seed=0) -> TheoremReport:
    """Probe the energy-loss inequality on random connected graphs.

    Per trial: a Gaussian signal (inequality), the degree-root vector
    (equality, relative residual) and a Gaussian signal projected
    orthogonal to it (strict loss, relative margin).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    violations, strict, worst_eq = 0, 0, 0.0
    margins = []
    for _ in range(trials):
        n = int(rng.integers(2, max_nodes + 1))
        g = random_connected_graph(n, float(rng.uniform(0.0, 0.5)), rng)
        op = build_renormalized_affinity(g)
        if not check_energy_loss(op, rng.normal(size=n)).holds:
            violations += 1
        v = degree_root_vector(g)
        eq = check_energy_loss(op, v)
        worst_eq = max(worst_eq, abs(eq.energy_out - eq.energy_in) / eq.energy_in)
        x = rng.normal(size=n)
        x -= (x @ v) / (v @ v) * v
        orth = check_energy_loss(op, x)
        if orth.energy_out < orth.energy_in:
            strict += 1
        margins.append((orth.energy_in - orth.energy_out) / orth.energy_in)
    m = np.array(margins)
    return TheoremReport(trials, violations, worst_eq, strict,
                         float(m.min()), float(np.median(m)), float(m.max()))


@dataclass
class DiagnoseReport:
    run_id: str
    epoch: int
    max_abs_error: float
    columns_checked: int

    @property
    def ok(self) -> bool:
        return self.max_abs_error <= 1e-9


def _csv_quantum(ref: float) -> float:
    """Half a unit in the last place of a 9-significant-digit value."""
    if ref == 0.0 or not math.isfinite(ref):
        return 0.0
    return 0.5 * 10.0 ** (math.floor(math.log10(abs(ref))) - 8)


def diagnose_run(run_dir, dataset: Dataset | None = None) -> list:
    """Re-derive the checkpointed epoch of every run in ``run_dir`` and compare to its trace.

    Traces store 9 significant digits, so the rounding quantum of each
    stored value is forgiven before the error is scaled by ``max(1, |value|)``.
    """
    run_dir = Path(run_dir)
    reports = []
    for conf_path in sorted(run_dir.glob("*.config.txt")):
        run_id = conf_path.name[: -len(".config.txt")]
        ckpt = run_dir / f"{run_id}.ckpt.npz"
        if not ckpt.exists():
            continue
        flat = diagnostics.read_config(conf_path)
        seed = int(flat.pop("run_seed"))
        for k in ("run_id", "failed", "best_epoch"):
            flat.pop(k, None)
        cfg = TrainConfig.from_flat(flat)
        ds = dataset
        if ds is None:
            ds = resolve_dataset(cfg.data if cfg.data else SyntheticSpec.parse(cfg.sbm))
        with np.load(ckpt) as z:
            epoch = int(z["epoch"])
            n = sum(1 for k in z.files if k.startswith("W"))
            params = ModelParams([z[f"W{i}"] for i in range(n)], [z[f"b{i}"] for i in range(n)])
        X = prepared_features(cfg, ds)
        op = build_operator(ds.graph, cfg.patches)
        eval_cache, metrics, grads = training_step(params, op, X, ds, cfg, seed, epoch)
        trace = diagnostics.snapshot_epoch(eval_cache, grads, params, metrics, epoch)
        saved = diagnostics.read_csv(run_dir / f"{run_id}.trace.csv")
        row = int(np.flatnonzero(saved["epoch"] == epoch)[0])
        head = diagnostics.csv_header(trace.hidden_depth)
        worst = 0.0
        for name, val in zip(head, trace.row()):
            ref = saved[name][row]
            err = max(0.0, abs(val - ref) - _csv_quantum(ref))
            worst = max(worst, err / max(1.0, abs(ref)))
        reports.append(DiagnoseReport(run_id, epoch, worst, len(head)))
    return reports
