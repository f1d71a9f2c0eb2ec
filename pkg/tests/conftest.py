"""Shared independent oracles for the test suite."""

import numpy as np
from scipy.linalg import expm

from bhcsweep import build_basis, assemble_operators


def dense_reference_propagation(params, protocol, n_steps, psi0=None,
                                substeps=1):
    """Brute-force oracle: dense matrix exponentials of the piecewise-constant
    midpoint Hamiltonian. Independent of the Krylov code path."""
    basis = build_basis(params.M, params.N)
    ops = assemble_operators(basis, params)
    if psi0 is None:
        psi = basis.source_state()
    else:
        psi = np.array(psi0, dtype=complex)
    total = n_steps * substeps
    dt = protocol.t_total / total
    for i in range(total):
        theta = float(protocol.theta_of((i + 0.5) * dt))
        H = ops.dense_hamiltonian(theta)
        psi = expm(-1j * dt * H) @ psi
    return psi, basis
