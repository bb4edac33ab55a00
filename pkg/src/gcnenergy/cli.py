"""Command line entry point: ``gcnenergy <command> ...``.

Exit codes: 0 success, 1 usage error, 2 run failure, 3 theorem check failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import diagnostics, harness
from .data import DatasetFormatError, SyntheticSpec, resolve_dataset
from .harness import TABLE1_REPORTED, TABLE1_VARIANTS, SearchSpace, TrainConfig
from .model import PatchConfig

EXIT_OK, EXIT_USAGE, EXIT_RUN, EXIT_THEOREM = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; the usage code here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag -> TrainConfig / PatchConfig key; the config file uses the same keys
_TRAIN_FLAGS = {
    "depth": int, "width": int, "lr": float, "weight_decay": float, "dropout": float,
    "patience": int, "max_epochs": int, "runs": int, "seed": int,
    "resolution": float, "weight_norm": float, "energy_norm": float,
    "init_const": float,
}


def _add_data_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--data", help="dataset directory")
    g.add_argument("--sbm", help="synthetic SBM spec, e.g. 'hard' or 'blocks=3,seed=1'")


def _add_train_args(p):
    for name, typ in _TRAIN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), type=typ, default=None)
    p.add_argument("--skip", action="store_true", default=None)
    p.add_argument("--init", dest="init_scheme", choices=("uniform", "normal"), default=None)
    p.add_argument("--weight-norm-init-only", action="store_true", default=None)
    p.add_argument("--normalize-features", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--jobs", type=int, default=1, help="runs executed in parallel")


def _train_config(args) -> TrainConfig:
    flat = {}
    if getattr(args, "config", None):
        try:
            flat.update(diagnostics.read_config(args.config))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        for k in ("run_seed", "run_id", "failed", "best_epoch"):
            flat.pop(k, None)
    keys = set(_TRAIN_FLAGS) | {"skip", "init_scheme", "weight_norm_init_only", "normalize_features"}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            flat[k] = v
    if args.data is not None:
        flat["data"], flat["sbm"] = str(args.data), None
    elif args.sbm is not None:
        flat["sbm"], flat["data"] = SyntheticSpec.parse(args.sbm).to_string(), None
    try:
        cfg = TrainConfig.from_flat(flat)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if cfg.data is None and cfg.sbm is None:
        raise UsageError("one of --data or --sbm is required (or data/sbm in --config)")
    return cfg


def _dataset(cfg: TrainConfig):
    src = cfg.data if cfg.data is not None else SyntheticSpec.parse(cfg.sbm)
    return resolve_dataset(src)


def _print_summary(s, reported=None):
    line = (f"{s.variant:<26} train loss {s.mean('train_loss'):.3f}  train acc "
            f"{100 * s.mean('train_acc'):6.2f}%  test acc {100 * s.mean('test_acc'):6.2f}% "
            f"+- {100 * s.std('test_acc'):5.2f}  ({s.n_runs} ok, {s.n_failed} failed)")
    if reported is not None:
        line += f"  [reported {reported[0]:.3f} / {100 * reported[1]:.2f}% / {100 * reported[3]:.2f}%]"
    print(line)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    ds = _dataset(cfg)
    out = Path(args.out)
    records = harness.run_many(cfg, ds, out_dir=out, prefix="train", jobs=args.jobs)
    s = harness.summarize("train", records)
    harness.write_summary([s], out / "ablation_summary.csv")
    _print_summary(s)
    if s.n_runs == 0:
        print("all runs diverged", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _train_config(args)
    if args.table1:
        variants = dict(TABLE1_VARIANTS)
    else:
        variants = {"baseline": PatchConfig()}
    if args.variants:
        names = [v.strip() for v in args.variants.split(",") if v.strip()]
        unknown = [v for v in names if v not in TABLE1_VARIANTS]
        if unknown:
            raise UsageError(f"unknown variants {unknown}; known: {sorted(TABLE1_VARIANTS)}")
        variants = {v: TABLE1_VARIANTS[v] for v in names}
    # shared settings such as dropout carry over into every variant
    variants = {k: replace(v, dropout=cfg.patches.dropout) for k, v in variants.items()}
    ds = _dataset(cfg)
    summaries = harness.ablate(ds, cfg, variants, out_dir=args.out, jobs=args.jobs)
    for s in summaries:
        _print_summary(s, TABLE1_REPORTED.get(s.variant) if args.show_reported else None)
    if any(s.n_runs == 0 for s in summaries):
        print("a variant had no successful runs", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


def cmd_search(args) -> int:
    if args.space != "default":
        raise UsageError(f"unknown search space {args.space!r}")
    cfg = _train_config(args)
    ds = _dataset(cfg)
    template = cfg.patches
    space = SearchSpace()
    if args.widths:
        try:
            widths = tuple(int(w) for w in args.widths.split(",") if w.strip())
        except ValueError as exc:
            raise UsageError(f"bad --widths: {args.widths!r}") from exc
        if not widths or min(widths) < 1:
            raise UsageError("--widths needs positive integers")
        space = replace(space, width=widths)
    result = harness.random_search(
        ds, space, template, cfg.seed, base_cfg=cfg,
        quick_runs=args.quick_runs, final_runs=args.final_runs,
        max_candidates=args.max_candidates, time_budget=args.budget,
        jobs=args.jobs, out_dir=args.out,
    )
    print(f"{len(result.candidates)} candidates, best validation accuracy {result.best_score:.4f}")
    if result.best_config is None:
        return EXIT_RUN
    for k, v in sorted(result.best_config.to_flat().items()):
        print(f"  {k} = {v}")
    if result.final is not None:
        _print_summary(result.final)
        if result.final.n_runs == 0:
            return EXIT_RUN
    return EXIT_OK


def cmd_verify_theorem(args) -> int:
    rep = harness.verify_theorem(args.trials, args.max_nodes, args.seed)
    print(f"trials: {rep.trials}")
    print(f"inequality violations: {rep.violations}")
    print(f"max relative equality residual at degree-root vector: {rep.max_equality_residual:.3e}")
    print(f"strict loss for orthogonal signals: {rep.strict_losses}/{rep.trials}")
    print(f"relative loss margin min/median/max: "
          f"{rep.margin_min:.3e} / {rep.margin_median:.3e} / {rep.margin_max:.3e}")
    print("PASS" if rep.passed else "FAIL")
    return EXIT_OK if rep.passed else EXIT_THEOREM


def cmd_diagnose(args) -> int:
    ds = None
    if args.data or args.sbm:
        ds = resolve_dataset(args.data if args.data else SyntheticSpec.parse(args.sbm))
    if not Path(args.run).is_dir():
        raise UsageError(f"not a directory: {args.run}")
    reports = harness.diagnose_run(args.run, ds)
    if not reports:
        print(f"no checkpointed runs found in {args.run}", file=sys.stderr)
        return EXIT_RUN
    for r in reports:
        status = "ok" if r.ok else "MISMATCH"
        print(f"{r.run_id}: epoch {r.epoch}, {r.columns_checked} columns, "
              f"max error {r.max_abs_error:.2e} {status}")
    return EXIT_OK if all(r.ok for r in reports) else EXIT_RUN


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gcnenergy", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one configuration for --runs seeds")
    _add_data_args(t, required=False)
    _add_train_args(t)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", help="run the ablation variant matrix")
    _add_data_args(a, required=False)
    _add_train_args(a)
    a.add_argument("--table1", action="store_true", help="all fifteen variants of the ablation matrix")
    a.add_argument("--variants", help="comma-separated subset of variant names")
    a.add_argument("--show-reported", action="store_true", help="print the published Cora values")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("search", help="random hyperparameter search")
    _add_data_args(s, required=False)
    _add_train_args(s)
    s.add_argument("--space", default="default")
    s.add_argument("--widths", help="comma-separated hidden widths to sample instead of 100..5000")
    s.add_argument("--quick-runs", type=int, default=3)
    s.add_argument("--final-runs", type=int, default=None)
    s.add_argument("--max-candidates", type=int, default=1000)
    s.add_argument("--budget", type=float, default=None, help="wall-clock limit in seconds")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    v = sub.add_parser("verify-theorem", help="check the energy-loss inequality on random graphs")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--max-nodes", type=int, default=50)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify_theorem)

    d = sub.add_parser("diagnose", help="re-derive checkpointed trace rows and compare")
    d.add_argument("--run", required=True)
    _add_data_args(d, required=False)
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gcnenergy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetFormatError) as exc:
        print(f"gcnenergy: {exc}", file=sys.stderr)
        return EXIT_RUN
    except ValueError as exc:
        print(f"gcnenergy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
