"""ReLU after graph convolution never adds energy, and only the degree-root
direction keeps all of it. Shifting the spectrum moves that balance.

    python demos/energy_loss.py
"""
import numpy as np

from gcnenergy.graph import (
    apply_spectra_shift,
    build_renormalized_affinity,
    check_energy_loss,
    degree_root_vector,
    eigendecompose,
    random_connected_graph,
)

rng = np.random.default_rng(0)
g = random_connected_graph(30, 0.1, rng)
op = build_renormalized_affinity(g)
print(f"graph: {g.n_nodes} nodes, {g.n_edges} edges")

eig = eigendecompose(op).eigenvalues
print(f"spectrum of A_hat: [{eig.min():.3f}, {eig.max():.3f}]")

# random signals lose energy
for i in range(3):
    chk = check_energy_loss(op, rng.normal(size=g.n_nodes))
    print(f"random signal {i}: |x|^2 = {chk.energy_in:8.3f}  |relu(A x)|^2 = {chk.energy_out:8.3f}")

# the degree-root vector is the fixed point
v = degree_root_vector(g)
chk = check_energy_loss(op, v)
print(f"degree-root vector: in {chk.energy_in:.6f}  out {chk.energy_out:.6f}")

# repeated application: what is left after k layers (no weights)
x = rng.normal(size=g.n_nodes)
for r in (0.0, 1.0):
    a = apply_spectra_shift(op, r).dense()
    y = x.copy()
    energies = []
    for _ in range(10):
        y = np.maximum(a @ y, 0.0)
        energies.append(float(y @ y))
    shown = " ".join(f"{e:.2e}" for e in energies[::3])
    print(f"r = {r}: energy after layers 1,4,7,10: {shown}")
