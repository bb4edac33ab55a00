"""Deep graph convolutional networks with energy-loss diagnostics.

Modules: :mod:`linalg` (dense/sparse kernels), :mod:`graph` (operators and
spectra), :mod:`model` / :mod:`backprop` (forward and manual reverse pass),
:mod:`optim` (Adam, weight normalization), :mod:`data`, :mod:`diagnostics`
(per-epoch traces) and :mod:`harness` (training, ablation, search).
"""
from .backprop import Gradients, backward, grad_check, loss_and_grads, output_gradient
from .data import Dataset, SyntheticSpec, generate_sbm, load_dataset, save_dataset
from .diagnostics import EpochTrace, RunRecord, snapshot_epoch, write_csv
from .graph import (
    Graph,
    Operator,
    apply_spectra_shift,
    build_renormalized_affinity,
    check_energy_loss,
    component_rescaling_check,
    eigendecompose,
)
from .harness import TrainConfig, ablate, random_search, train_run, verify_theorem
from .model import ModelParams, PatchConfig, forward, init_params, nll_loss
from .optim import Adam, apply_weight_norm

__version__ = "0.1.0"
