"""Acceptance suite: one check per criterion, each printing a status line.

Criteria 4 to 8 need the Cora citation graph in the text format of
``gcnenergy.data`` (``$GCNENERGY_CORA`` or ``data/cora``; convert with
``scripts/planetoid_to_text.py``). Without it they print BLOCKED and skip.
The same claims are then exercised on the ``hard`` SBM preset with fewer
runs. Stand-in lines say what holds there; thresholds that do not hold on
the stand-in are printed as FAIL with their numbers and are not asserted.
"""
import filecmp
import os
import time
from pathlib import Path

import numpy as np
import pytest

from gcnenergy.backprop import grad_check
from gcnenergy.cli import main
from gcnenergy.data import SyntheticSpec, load_dataset, resolve_dataset
from gcnenergy.diagnostics import read_csv
from gcnenergy.graph import (
    apply_spectra_shift,
    build_renormalized_affinity,
    component_rescaling_check,
    eigendecompose,
    random_connected_graph,
)
from gcnenergy.harness import (
    TABLE1_VARIANTS,
    SearchSpace,
    TrainConfig,
    ablate,
    random_search,
)
from gcnenergy.model import PatchConfig

from conftest import GRADCHECK_COMBOS, gradcheck_instance

CORA_DIR = Path(os.environ.get("GCNENERGY_CORA", Path(__file__).parents[1] / "data" / "cora"))
STANDIN_RUNS = int(os.environ.get("GCNENERGY_STANDIN_RUNS", "3"))
STANDIN = "hard"


@pytest.fixture
def report(capsys):
    def _report(n, status, detail="", tag=""):
        label = f"criterion {n}" + (f" [{tag}]" if tag else "")
        with capsys.disabled():
            print(f"\n{label}: {status} {detail}".rstrip())
    return _report


def _verdict(ok):
    return "PASS" if ok else "FAIL"


# -- criteria 1-3: exact oracles ---------------------------------------------


def test_criterion_1_theorem(report, capsys):
    t0 = time.perf_counter()
    code = main(["verify-theorem", "--trials", "1000", "--max-nodes", "50", "--seed", "0"])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    fields = dict(line.split(": ", 1) for line in out.splitlines() if ": " in line)
    violations = int(fields["inequality violations"])
    residual = float(fields["max relative equality residual at degree-root vector"])
    strict = fields["strict loss for orthogonal signals"]
    ok = code == 0 and violations == 0 and residual <= 1e-12 and strict == "1000/1000" and elapsed < 30
    report(1, _verdict(ok), f"violations {violations}, equality residual {residual:.1e}, "
                            f"strict {strict}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_gradient_oracle(report):
    t0 = time.perf_counter()
    errors, margins = {}, {}
    for name, patch in GRADCHECK_COMBOS.items():
        cfg = PatchConfig(**patch)
        params, op, X, Z, mask, margin = gradcheck_instance(cfg)
        errors[name] = grad_check(params, op, X, Z, mask, cfg)
        margins[name] = margin
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst <= 1e-4 and elapsed < 60
    report(2, _verdict(ok), f"max relative error {worst:.1e} over {len(errors)} combos, {elapsed:.1f}s")
    # central differences are only meaningful away from ReLU kinks
    assert min(margins.values()) > 1e-4
    assert ok, errors


def test_criterion_3_spectral_identity(report):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 201))
        op = build_renormalized_affinity(random_connected_graph(n, float(rng.uniform(0, 0.1)), rng))
        basis = eigendecompose(op)
        x = rng.normal(size=n)
        for r in (-0.5, 0.0, 1.0, 3.0):
            worst = max(worst, component_rescaling_check(apply_spectra_shift(op, r), basis, x))
    report(3, _verdict(worst <= 1e-8), f"max error {worst:.1e} on 20 graphs x 4 shifts")
    assert worst <= 1e-8


# -- criteria 4-8 on Cora -----------------------------------------------------


def _cora_or_skip(report, n):
    if not (CORA_DIR / "edges.txt").is_file():
        report(n, "BLOCKED", f"Cora not found at {CORA_DIR}")
        pytest.skip("Cora dataset not available")
    return load_dataset(CORA_DIR, name="cora")


@pytest.fixture(scope="module")
def cora_matrix(tmp_path_factory):
    ds = load_dataset(CORA_DIR, name="cora")
    out = tmp_path_factory.mktemp("cora_ablation")
    summaries = ablate(ds, TrainConfig(runs=20), TABLE1_VARIANTS, out_dir=out)
    return ds, {s.variant: s for s in summaries}, out


def _check_baseline(s):
    return s.mean("train_loss") >= 1.5 and s.mean("train_acc") <= 0.35 and s.mean("test_acc") <= 0.45


def _describe(s):
    return (f"train loss {s.mean('train_loss'):.3f}, train acc {100 * s.mean('train_acc'):.2f}%, "
            f"test acc {100 * s.mean('test_acc'):.2f}%")


@pytest.mark.slow
def test_criterion_4_baseline_cora(report, request):
    _cora_or_skip(report, 4)
    _, rows, _ = request.getfixturevalue("cora_matrix")
    ok = _check_baseline(rows["baseline"])
    report(4, _verdict(ok), _describe(rows["baseline"]))
    assert ok


@pytest.mark.slow
def test_criterion_5_tr_cora(report, request):
    _cora_or_skip(report, 5)
    _, rows, _ = request.getfixturevalue("cora_matrix")
    tr, base = rows["tr1"], rows["baseline"]
    gap = tr.mean("test_acc") - base.mean("test_acc")
    ok = tr.mean("train_loss") <= 0.1 and tr.mean("train_acc") >= 0.95 and gap >= 0.20
    report(5, _verdict(ok), f"{_describe(tr)}, gap {100 * gap:.1f} points")
    assert ok


@pytest.mark.slow
def test_criterion_6_skip_wnorm_cora(report, request):
    _cora_or_skip(report, 6)
    _, rows, _ = request.getfixturevalue("cora_matrix")
    acc = {k: s.mean("test_acc") for k, s in rows.items()}
    best = max(acc.values())
    ok = acc["skip_wnorm7"] >= 0.65 and acc["skip_wnorm7"] >= best - 0.03
    report(6, _verdict(ok), f"skip_wnorm7 {100 * acc['skip_wnorm7']:.2f}%, best {100 * best:.2f}%")
    assert ok


def _trace_claims(out, seed=0):
    base = read_csv(Path(out) / "baseline" / f"baseline_s{seed}.trace.csv")
    tr = read_csv(Path(out) / "tr1" / f"tr1_s{seed}.trace.csv")
    e0, e_end = base["colE_mean_L1"][0], base["colE_mean_L1"][-1]
    n = min(len(base["gnorm_L1"]), len(tr["gnorm_L1"]))
    dominance = float(np.mean(tr["gnorm_L1"][:n] > base["gnorm_L1"][:n]))
    return e0, e_end, dominance, n


@pytest.mark.slow
def test_criterion_7_traces_cora(report, request):
    _cora_or_skip(report, 7)
    _, _, out = request.getfixturevalue("cora_matrix")
    e0, e_end, dom, n = _trace_claims(out)
    ok = e_end < e0 and dom >= 0.8
    report(7, _verdict(ok), f"layer-1 energy {e0:.3g} -> {e_end:.3g}, "
                            f"TR gradient dominance {100 * dom:.0f}% of {n} epochs")
    assert ok


@pytest.mark.slow
def test_criterion_8_search_cora(report, request):
    ds = _cora_or_skip(report, 8)
    _, rows, _ = request.getfixturevalue("cora_matrix")
    template = TABLE1_VARIANTS["tr1"]
    res = random_search(ds, SearchSpace(), template, 0, base_cfg=TrainConfig(runs=20),
                        time_budget=7200.0)
    again = random_search(ds, SearchSpace(), template, 0, base_cfg=TrainConfig(runs=20),
                          max_candidates=2, final_runs=0)
    deterministic = again.candidates == res.candidates[:2]
    found, fixed = res.final.mean("test_acc"), rows["tr1"].mean("test_acc")
    ok = found > fixed and deterministic
    report(8, _verdict(ok), f"search {100 * found:.2f}% vs fixed TR {100 * fixed:.2f}%, "
                            f"deterministic {deterministic}")
    assert ok


# -- criteria 4-8 on the SBM stand-in ---------------------------------------


@pytest.fixture(scope="module")
def standin(tmp_path_factory):
    ds = resolve_dataset(SyntheticSpec.parse(STANDIN))
    out = tmp_path_factory.mktemp("standin_ablation")
    summaries = ablate(ds, TrainConfig(runs=STANDIN_RUNS), TABLE1_VARIANTS, out_dir=out)
    return ds, {s.variant: s for s in summaries}, out


TAG = f"SBM stand-in, {STANDIN_RUNS} runs"


@pytest.mark.slow
def test_criterion_4_baseline_standin(report, standin):
    _, rows, _ = standin
    ok = _check_baseline(rows["baseline"])
    report(4, _verdict(ok), _describe(rows["baseline"]), TAG)
    assert ok


@pytest.mark.slow
def test_criterion_5_tr_standin(report, standin):
    _, rows, _ = standin
    tr, base = rows["tr1"], rows["baseline"]
    gap = tr.mean("test_acc") - base.mean("test_acc")
    fits = tr.mean("train_loss") <= 0.1 and tr.mean("train_acc") >= 0.95
    report(5, f"gap {_verdict(gap >= 0.20)}, fit {_verdict(fits)}",
           f"{_describe(tr)}, gap {100 * gap:.1f} points", TAG)
    # the fit thresholds are not met on the stand-in; what must hold is
    # that TR trains where the baseline does not, and generalises better
    assert gap >= 0.20
    assert tr.mean("train_loss") < 0.5 * base.mean("train_loss")


@pytest.mark.slow
def test_criterion_6_skip_wnorm_standin(report, standin):
    _, rows, _ = standin
    acc = {k: s.mean("test_acc") for k, s in rows.items()}
    best = max(acc.values())
    ok = acc["skip_wnorm7"] >= 0.65 and acc["skip_wnorm7"] >= best - 0.03
    report(6, _verdict(ok), f"skip_wnorm7 {100 * acc['skip_wnorm7']:.2f}%, "
                            f"best {max(acc, key=acc.get)} {100 * best:.2f}%", TAG)
    assert ok


@pytest.mark.slow
def test_criterion_7_traces_standin(report, standin):
    _, _, out = standin
    results = [_trace_claims(out, seed) for seed in range(STANDIN_RUNS)]
    shrink = sum(e_end < e0 for e0, e_end, _, _ in results)
    dom = min(d for _, _, d, _ in results)
    report(7, f"energy {_verdict(shrink == len(results))}, gradients {_verdict(dom >= 0.8)}",
           f"layer-1 energy shrinks in {shrink}/{len(results)} baseline runs, "
           f"TR gradient dominance >= {100 * dom:.0f}%", TAG)
    # on the stand-in the undecayed first-layer bias makes layer-1 energy
    # grow even though W0 shrinks, so only the gradient claim is asserted
    assert dom >= 0.8


@pytest.mark.slow
def test_criterion_8_search_standin(report, standin, tmp_path):
    ds, rows, _ = standin
    space = SearchSpace(width=(16, 32, 64))
    cfg = TrainConfig(runs=STANDIN_RUNS, max_epochs=600)
    res = random_search(ds, space, TABLE1_VARIANTS["tr1"], 0, base_cfg=cfg,
                        quick_runs=1, max_candidates=6, out_dir=tmp_path / "a")
    again = random_search(ds, space, TABLE1_VARIANTS["tr1"], 0, base_cfg=cfg,
                          quick_runs=1, max_candidates=6, out_dir=tmp_path / "b")
    same = all(filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)
               for f in ("candidates.csv", "best.config.txt", "ablation_summary.csv"))
    found, fixed = res.final.mean("test_acc"), rows["tr1"].mean("test_acc")
    report(8, f"deterministic {_verdict(same)}, beats fixed TR {_verdict(found > fixed)}",
           f"6-candidate search {100 * found:.2f}% vs fixed TR {100 * fixed:.2f}%", TAG)
    assert same


# -- criterion 9 --------------------------------------------------------------


def _cli_outputs(out):
    sbm = "default,seed=2"
    common = ["--sbm", sbm, "--depth", "4", "--width", "8", "--patience", "10",
              "--max-epochs", "40", "--runs", "2", "--dropout", "0.3"]
    assert main(["train", *common, "--resolution", "1", "--out", str(out / "train")]) == 0
    assert main(["ablate", *common, "--variants", "baseline,tr1_skip,skip_wnorm7,tr1_enorm550",
                 "--out", str(out / "ablate")]) == 0
    assert main(["search", *common, "--resolution", "1", "--quick-runs", "1", "--final-runs", "2",
                 "--max-candidates", "3", "--widths", "8,16", "--out", str(out / "search")]) == 0
    return sorted(p.relative_to(out) for p in out.rglob("*.csv"))


def test_criterion_9_determinism(report, tmp_path, capsys):
    first = _cli_outputs(tmp_path / "one")
    second = _cli_outputs(tmp_path / "two")
    capsys.readouterr()
    differing = [str(p) for p in first
                 if not filecmp.cmp(tmp_path / "one" / p, tmp_path / "two" / p, shallow=False)]
    ok = first == second and len(first) > 0 and not differing
    report(9, _verdict(ok), f"{len(first)} CSV files compared, {len(differing)} differ")
    assert ok, differing
