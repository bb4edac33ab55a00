"""Graph operators: Laplacians, the renormalized affinity and its shifted form.

Also hosts the graph Fourier utilities and the energy-loss checker for the
``ReLU(A_hat x)`` operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .linalg import check_sym_csr, relu, spmm

EIG_MAX_DIM = 2000
ENERGY_SLACK = 1e-12

OPERATOR_KINDS = ("laplacian", "sym_laplacian", "renorm_affinity", "tr_affinity")


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph on nodes ``0..n_nodes-1``.

    ``edges`` holds each undirected edge once as a ``(u, v)`` row with
    ``u <= v``, sorted lexicographically.
    """

    n_nodes: int
    edges: np.ndarray
    n_components: int = field(init=False)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("graph needs at least one node")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= self.n_nodes):
            raise ValueError("edge endpoint out of range")
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if e.size else e
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        object.__setattr__(self, "n_components", int(ncomp))

    @classmethod
    def from_edges(cls, n_nodes, edges):
        return cls(n_nodes, np.asarray(list(edges), dtype=np.int64).reshape(-1, 2))

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def is_connected(self) -> bool:
        return self.n_components == 1

    def adjacency(self) -> sp.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        off = u != v
        rows = np.concatenate([u, v[off]])
        cols = np.concatenate([v, u[off]])
        a = sp.csr_matrix(
            (np.ones(rows.size), (rows, cols)), shape=(self.n_nodes, self.n_nodes)
        )
        a.sort_indices()
        return a

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency().sum(axis=1)).ravel()


@dataclass(frozen=True)
class Operator:
    """A symmetric sparse graph operator and how it was built."""

    matrix: sp.csr_matrix
    kind: str
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        check_sym_csr(self.matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        return spmm(self.matrix, other)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class SpectralBasis:
    """Orthonormal eigenvectors (columns of ``U``) with ascending eigenvalues."""

    U: np.ndarray
    eigenvalues: np.ndarray


def laplacian(g: Graph) -> Operator:
    a = g.adjacency()
    lap = sp.diags(g.degrees()) - a
    return Operator(sp.csr_matrix(lap, dtype=np.float64).sorted_indices(), "laplacian")


def sym_laplacian(g: Graph) -> Operator:
    """``I - D^-1/2 A D^-1/2``; isolated nodes get a zero row."""
    deg = g.degrees()
    inv = np.zeros_like(deg)
    inv[deg > 0] = deg[deg > 0] ** -0.5
    d = sp.diags(inv)
    lap = sp.identity(g.n_nodes) - d @ g.adjacency() @ d
    return Operator(sp.csr_matrix(lap).sorted_indices(), "sym_laplacian")


def renormalized_degrees(g: Graph) -> np.ndarray:
    """Diagonal of ``D_tilde``, the degree matrix of ``A + I``."""
    return g.degrees() + 1.0


def degree_root_vector(g: Graph) -> np.ndarray:
    """``[sqrt(D~_11), ..., sqrt(D~_NN)]``, the eigenvalue-1 eigenvector of ``A_hat``."""
    return np.sqrt(renormalized_degrees(g))


def build_renormalized_affinity(g: Graph) -> Operator:
    """``A_hat = D~^-1/2 (A + I) D~^-1/2``."""
    a_tilde = g.adjacency() + sp.identity(g.n_nodes, format="csr")
    d = sp.diags(1.0 / np.sqrt(renormalized_degrees(g)))
    a_hat = sp.csr_matrix(d @ a_tilde @ d)
    a_hat.sort_indices()
    # the two-sided scaling can leave asymmetric rounding; force exact symmetry
    a_hat = sp.csr_matrix((a_hat + a_hat.T) * 0.5)
    a_hat.sort_indices()
    return Operator(a_hat, "renorm_affinity")


def apply_spectra_shift(op: Operator, r: float) -> Operator:
    """Topology rescaling: ``A_r = r I + A_hat``."""
    if op.kind != "renorm_affinity":
        raise ValueError(f"spectra shift expects a renorm_affinity operator, got {op.kind}")
    r = float(r)
    shifted = sp.csr_matrix(op.matrix + r * sp.identity(op.dim, format="csr"))
    shifted.sort_indices()
    return Operator(shifted, "tr_affinity", shift=r)


def eigendecompose(op: Operator, max_dim: int = EIG_MAX_DIM) -> SpectralBasis:
    """Dense symmetric eigendecomposition, intended for diagnostics on small graphs."""
    if op.dim > max_dim:
        raise ValueError(
            f"eigendecompose is for diagnostics only: dim {op.dim} exceeds cap {max_dim}"
        )
    lam, U = np.linalg.eigh(op.dense())
    return SpectralBasis(U, lam)


def graph_fourier_transform(basis: SpectralBasis, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != basis.U.shape[0]:
        raise ValueError(f"signal length {x.shape[0]} != basis dimension {basis.U.shape[0]}")
    return basis.U.T @ x


def signal_energy(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * x))


@dataclass(frozen=True)
class EnergyCheck:
    energy_in: float
    energy_out: float
    holds: bool


def check_energy_loss(op: Operator, x) -> EnergyCheck:
    """Compare the energy of ``x`` with that of ``ReLU(A_hat x)``."""
    if op.kind != "renorm_affinity":
        raise ValueError("energy-loss check applies to the renormalized affinity")
    x = np.asarray(x, dtype=np.float64)
    e_in = signal_energy(x)
    e_out = signal_energy(relu((op @ x.reshape(-1, 1)).ravel()))
    return EnergyCheck(e_in, e_out, e_out <= e_in + ENERGY_SLACK)


def is_energy_preserving(phi, probes, rtol: float = 1e-10) -> bool:
    """True if ``||phi(x)||^2 == ||x||^2`` (to ``rtol``) for every probe signal."""
    for x in probes:
        e_in = signal_energy(x)
        e_out = signal_energy(phi(x))
        if abs(e_out - e_in) > rtol * max(e_in, 1.0):
            return False
    return True


def component_rescaling_check(op_r: Operator, basis: SpectralBasis, x) -> float:
    """Max deviation of ``u_i^T (A_r x)`` from ``(lambda_i + r) u_i^T x``.

    ``basis`` must decompose the unshifted operator.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != op_r.dim or basis.U.shape[0] != op_r.dim:
        raise ValueError("dimension mismatch between operator, basis and signal")
    lhs = basis.U.T @ (op_r @ x.reshape(-1, 1)).ravel()
    rhs = (basis.eigenvalues + op_r.shift) * (basis.U.T @ x)
    return float(np.max(np.abs(lhs - rhs)))


def random_connected_graph(n_nodes: int, p: float, rng) -> Graph:
    """Erdos-Renyi edges plus a random spanning tree, so the result is connected."""
    order = rng.permutation(n_nodes)
    edges = [
        (order[i], order[rng.integers(0, i)]) for i in range(1, n_nodes)
    ]
    iu, ju = np.triu_indices(n_nodes, k=1)
    keep = rng.random(iu.size) < p
    edges.extend(zip(iu[keep], ju[keep]))
    return Graph.from_edges(n_nodes, edges)
