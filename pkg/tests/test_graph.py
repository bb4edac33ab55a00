import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcnenergy.graph import (
    Graph,
    Operator,
    apply_spectra_shift,
    build_renormalized_affinity,
    check_energy_loss,
    component_rescaling_check,
    degree_root_vector,
    eigendecompose,
    graph_fourier_transform,
    is_energy_preserving,
    laplacian,
    random_connected_graph,
    signal_energy,
    sym_laplacian,
)
from gcnenergy.linalg import relu, sym_csr

from conftest import single_edge, triangle


def test_graph_canonicalises_edges():
    g = Graph.from_edges(4, [(1, 0), (0, 1), (2, 3)])
    assert g.n_edges == 2
    assert g.edges.tolist() == [[0, 1], [2, 3]]
    assert g.n_components == 2 and not g.is_connected
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 2)])
    with pytest.raises(ValueError):
        Graph.from_edges(0, [])


def test_laplacians_on_single_edge():
    g = single_edge()
    np.testing.assert_array_equal(laplacian(g).dense(), [[1, -1], [-1, 1]])
    np.testing.assert_allclose(sym_laplacian(g).dense(), [[1, -1], [-1, 1]], atol=1e-15)


def test_affinity_examples():
    np.testing.assert_allclose(build_renormalized_affinity(single_edge()).dense(),
                               [[0.5, 0.5], [0.5, 0.5]], rtol=1e-15)
    np.testing.assert_array_equal(build_renormalized_affinity(Graph(1, [])).dense(), [[1.0]])
    a = build_renormalized_affinity(triangle())
    np.testing.assert_allclose(a.dense(), np.full((3, 3), 1 / 3), rtol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(a.dense()), [0, 0, 1], atol=1e-12)


def test_affinity_entries_match_dense_formula(rng):
    g = random_connected_graph(15, 0.2, rng)
    a = g.adjacency().toarray() + np.eye(15)
    d = a.sum(axis=1)
    want = a / np.sqrt(np.outer(d, d))
    np.testing.assert_allclose(build_renormalized_affinity(g).dense(), want, rtol=1e-14)


def test_spectra_shift_examples():
    a = build_renormalized_affinity(single_edge())
    assert np.array_equal(apply_spectra_shift(a, 0.0).dense(), a.dense())
    s = apply_spectra_shift(a, 1.0)
    assert s.kind == "tr_affinity" and s.shift == 1.0
    np.testing.assert_allclose(s.dense(), [[1.5, 0.5], [0.5, 1.5]], rtol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(s.dense()), [1, 2], atol=1e-12)
    k3 = apply_spectra_shift(build_renormalized_affinity(triangle()), -1.0)
    np.testing.assert_allclose(np.linalg.eigvalsh(k3.dense()), [-1, -1, 0], atol=1e-12)
    with pytest.raises(ValueError):
        apply_spectra_shift(s, 1.0)


def test_eigendecompose_examples():
    eye = Operator(sym_csr([0, 1, 2], [0, 1, 2], [1.0] * 3, 3), "renorm_affinity")
    b = eigendecompose(eye)
    np.testing.assert_allclose(b.eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(b.U @ np.diag(b.eigenvalues) @ b.U.T, np.eye(3), atol=1e-12)
    b = eigendecompose(build_renormalized_affinity(single_edge()))
    np.testing.assert_allclose(b.eigenvalues, [0, 1], atol=1e-12)
    top = b.U[:, 1]
    np.testing.assert_allclose(abs(top), [2 ** -0.5, 2 ** -0.5], rtol=1e-12)
    np.testing.assert_allclose(eigendecompose(build_renormalized_affinity(triangle())).eigenvalues,
                               [0, 0, 1], atol=1e-12)
    with pytest.raises(ValueError, match="diagnostics"):
        eigendecompose(eye, max_dim=2)


def test_fourier_transform_examples(rng):
    op = build_renormalized_affinity(random_connected_graph(6, 0.4, rng))
    b = eigendecompose(op)
    for i in range(6):
        np.testing.assert_allclose(graph_fourier_transform(b, b.U[:, i]), np.eye(6)[i], atol=1e-12)
    assert np.array_equal(graph_fourier_transform(b, np.zeros(6)), np.zeros(6))
    b2 = eigendecompose(build_renormalized_affinity(single_edge()))
    x = rng.normal(size=2)
    assert np.linalg.norm(graph_fourier_transform(b2, x)) == pytest.approx(np.linalg.norm(x), abs=1e-10)


def test_signal_energy_examples(rng):
    assert signal_energy([3.0, 4.0]) == 25.0
    assert signal_energy(np.zeros(4)) == 0.0
    b = eigendecompose(build_renormalized_affinity(random_connected_graph(10, 0.3, rng)))
    x = rng.normal(size=10)
    assert signal_energy(b.U.T @ x) == pytest.approx(signal_energy(x), abs=1e-10)


def test_energy_loss_examples(rng):
    g = random_connected_graph(12, 0.3, rng)
    op = build_renormalized_affinity(g)
    v = degree_root_vector(g)
    eq = check_energy_loss(op, v)
    assert abs(eq.energy_out - eq.energy_in) <= 1e-12 * eq.energy_in
    assert eq.holds
    x = rng.normal(size=12)
    x -= (x @ v) / (v @ v) * v
    c = check_energy_loss(op, x)
    assert c.energy_out < c.energy_in
    with pytest.raises(ValueError):
        check_energy_loss(apply_spectra_shift(op, 1.0), x)


def test_energy_loss_holds_on_1000_random_trials():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        op = build_renormalized_affinity(random_connected_graph(n, rng.uniform(0, 0.5), rng))
        assert check_energy_loss(op, rng.normal(size=n)).holds


def test_component_rescaling_examples(rng):
    op = build_renormalized_affinity(single_edge())
    b = eigendecompose(op)
    assert component_rescaling_check(apply_spectra_shift(op, 0.0), b, rng.normal(size=2)) <= 1e-10
    # hand expansion: A_1 [1, 0] = [1.5, 0.5]; components along (1,1)/sqrt2 and (1,-1)/sqrt2
    x = np.array([1.0, 0.0])
    op1 = apply_spectra_shift(op, 1.0)
    np.testing.assert_allclose((op1 @ x.reshape(-1, 1)).ravel(), [1.5, 0.5])
    assert component_rescaling_check(op1, b, x) <= 1e-10
    op20 = build_renormalized_affinity(random_connected_graph(20, 0.2, rng))
    b20 = eigendecompose(op20)
    assert component_rescaling_check(apply_spectra_shift(op20, -0.5), b20, rng.normal(size=20)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.floats(0.0, 0.6), st.integers(0, 2**32 - 1))
def test_affinity_spectrum_in_half_open_unit_interval(n, p, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, p, rng)
    assert g.is_connected
    lam = eigendecompose(build_renormalized_affinity(g)).eigenvalues
    assert lam.min() > -1 + 1e-8
    assert lam.max() == pytest.approx(1.0, abs=1e-8)
    assert np.sum(np.abs(lam - 1.0) <= 1e-8) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.floats(-1.0, 5.0), st.integers(0, 2**32 - 1))
def test_shift_preserves_eigenvectors(n, r, seed):
    rng = np.random.default_rng(seed)
    op = build_renormalized_affinity(random_connected_graph(n, 0.3, rng))
    b = eigendecompose(op)
    shifted = apply_spectra_shift(op, r).dense()
    for i in range(n):
        u = b.U[:, i]
        assert np.linalg.norm(shifted @ u - (b.eigenvalues[i] + r) * u) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_basis_orthonormal_and_reconstructs(n, seed):
    rng = np.random.default_rng(seed)
    op = build_renormalized_affinity(random_connected_graph(n, 0.3, rng))
    b = eigendecompose(op)
    np.testing.assert_allclose(b.U.T @ b.U, np.eye(n), atol=1e-8)
    np.testing.assert_allclose(b.U @ np.diag(b.eigenvalues) @ b.U.T, op.dense(), atol=1e-8)
    assert np.all(np.diff(b.eigenvalues) >= 0)


def test_relu_affinity_is_not_energy_preserving(rng):
    g = random_connected_graph(10, 0.3, rng)
    op = build_renormalized_affinity(g)
    phi = lambda x: relu((op @ np.reshape(x, (-1, 1))).ravel())
    probes = [rng.normal(size=10) for _ in range(5)]
    assert not is_energy_preserving(phi, probes)
    # positive control: the identity preserves energy
    assert is_energy_preserving(lambda x: x, probes)
    # ReLU(A_hat v) = v, so the degree-root vector alone is preserved
    assert is_energy_preserving(phi, [degree_root_vector(g)])
