"""Number-conserving Fock basis and sparse many-body Hamiltonian pieces.

The Hamiltonian is assembled once into theta-independent parts

    H(theta) = D - (K/2) [ sin(theta) A_odd + cos(theta) A_even ]

where D collects the interaction and detuning diagonals and A_odd/A_even
are the symmetric hopping operators on odd/even bonds. A sweep only
recombines the parts with two scalars, so stepping is cheap and exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
from scipy.sparse import csr_matrix

from .errors import CapacityError, ParameterError, StaleStateError
from .model import ModelParams

DEFAULT_BASIS_CAP = 500_000
DEFAULT_DENSE_CAP = 5_000


@dataclass(frozen=True)
class FockBasis:
    """Ordered N-particle, M-site occupation basis with a bijective index."""

    M: int
    N: int
    states: np.ndarray          # (dim, M) int64, lexicographically ascending
    keys: np.ndarray = field(repr=False)   # sorted integer encodings of states
    powers: np.ndarray = field(repr=False)  # base-(N+1) digit weights

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def index_of(self, occupation) -> int:
        occ = np.asarray(occupation, dtype=np.int64)
        if occ.shape != (self.M,) or occ.sum() != self.N or (occ < 0).any():
            raise ParameterError(f"not a valid occupation vector: {occupation}")
        key = int(occ @ self.powers)
        pos = int(np.searchsorted(self.keys, key))
        if pos >= self.dim or self.keys[pos] != key:
            raise ParameterError(f"occupation not in basis: {occupation}")
        return pos

    def fock_state(self, occupation) -> np.ndarray:
        """Unit amplitude vector on a single occupation."""
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index_of(occupation)] = 1.0
        return psi

    def source_state(self) -> np.ndarray:
        """All N particles on site 1: the sweep's launch state."""
        return self.fock_state([self.N] + [0] * (self.M - 1))


def build_basis(M: int, N: int, cap: int = DEFAULT_BASIS_CAP) -> FockBasis:
    """Enumerate all (n_1..n_M) with sum N, lexicographically ascending."""
    if M < 2 or N < 1:
        raise ParameterError(f"need M >= 2 and N >= 1, got M={M}, N={N}")
    dim = comb(N + M - 1, M - 1)
    if dim > cap:
        raise CapacityError(
            f"Fock dimension {dim} for M={M}, N={N} exceeds the cap {cap}")
    # stars-and-bars: divider positions -> occupations, in ascending order
    states = np.empty((dim, M), dtype=np.int64)
    edges = np.empty(M + 1, dtype=np.int64)
    edges[0] = -1
    edges[M] = N + M - 1
    for row, dividers in enumerate(combinations(range(N + M - 1), M - 1)):
        edges[1:M] = dividers
        states[row] = np.diff(edges) - 1
    powers = (N + 1) ** np.arange(M - 1, -1, -1, dtype=np.int64)
    keys = states @ powers
    # ascending lexicographic order <=> ascending keys
    assert (np.diff(keys) > 0).all()
    return FockBasis(M=M, N=N, states=states, keys=keys, powers=powers)


def _hopping_parts(basis: FockBasis) -> tuple[csr_matrix, csr_matrix]:
    """Symmetric hopping operators sum_bonds (a^dag_{j+1} a_j + h.c.) split
    into odd and even bonds, matrix elements sqrt(n_j (n_{j+1} + 1))."""
    states, keys, powers = basis.states, basis.keys, basis.powers
    dim, M = basis.dim, basis.M
    parts = []
    for parity in (0, 1):       # 0: odd bonds (1-based), 1: even bonds
        rows, cols, vals = [], [], []
        for b in range(parity, M - 1, 2):
            src = np.nonzero(states[:, b] >= 1)[0]
            amp = np.sqrt(states[src, b] * (states[src, b + 1] + 1.0))
            new_keys = keys[src] - powers[b] + powers[b + 1]
            dst = np.searchsorted(keys, new_keys)
            rows.append(dst)
            cols.append(src)
            vals.append(amp)
            rows.append(src)
            cols.append(dst)
            vals.append(amp)
        if rows:
            mat = csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(dim, dim))
        else:
            mat = csr_matrix((dim, dim))
        mat.sum_duplicates()
        mat.sort_indices()
        parts.append(mat)
    return parts[0], parts[1]


@dataclass(frozen=True)
class FockOperatorSet:
    """Theta-independent Hamiltonian pieces over a FockBasis."""

    basis: FockBasis
    params: ModelParams
    diag_interaction: np.ndarray   # sum_j (U/2) n_j (n_j - 1)
    diag_detuning: np.ndarray      # V * n_mid
    a_odd: csr_matrix
    a_even: csr_matrix

    @property
    def diagonal(self) -> np.ndarray:
        return self.diag_interaction + self.diag_detuning

    def coefficients(self, theta: float) -> tuple[float, float]:
        """Scalar prefactors of (A_odd, A_even) in H(theta)."""
        K = self.params.K
        return -K * np.sin(theta) / 2.0, -K * np.cos(theta) / 2.0

    def combined(self, c_odd: float, c_even: float) -> csr_matrix:
        """diag + c_odd A_odd + c_even A_even with deterministic assembly."""
        dim = self.basis.dim
        h = c_odd * self.a_odd + c_even * self.a_even
        h = h + csr_matrix((self.diagonal, (np.arange(dim), np.arange(dim))),
                           shape=(dim, dim))
        h.sum_duplicates()
        h.sort_indices()
        return h

    def hamiltonian(self, theta: float) -> csr_matrix:
        """Assembled sparse H(theta)."""
        return self.combined(*self.coefficients(theta))

    def dense_hamiltonian(self, theta: float) -> np.ndarray:
        return self.hamiltonian(theta).toarray()

    def matvec(self, theta: float, psi: np.ndarray) -> np.ndarray:
        """H(theta) @ psi without materializing H."""
        c_odd, c_even = self.coefficients(theta)
        return self.diagonal * psi + c_odd * (self.a_odd @ psi) \
            + c_even * (self.a_even @ psi)

    def norm_bound(self) -> float:
        """Gershgorin bound on ||H(theta)||, uniform over theta."""
        row_odd = np.asarray(np.abs(self.a_odd).sum(axis=1)).ravel()
        row_even = np.asarray(np.abs(self.a_even).sum(axis=1)).ravel()
        return float((np.abs(self.diagonal)
                      + (self.params.K / 2.0) * (row_odd + row_even)).max())

    def expectation(self, theta: float, psi: np.ndarray) -> float:
        """<psi|H(theta)|psi> (state assumed normalized)."""
        return float(np.real(np.vdot(psi, self.matvec(theta, psi))))


def assemble_operators(basis: FockBasis, params: ModelParams) -> FockOperatorSet:
    """Build the diagonal and hopping pieces for the given parameters."""
    if params.M != basis.M or params.N != basis.N:
        raise ParameterError("basis and params disagree on (M, N)")
    n = basis.states
    diag_u = (params.U / 2.0) * (n * (n - 1)).sum(axis=1).astype(float)
    diag_v = params.V * n[:, params.mid_site].astype(float)
    a_odd, a_even = _hopping_parts(basis)
    return FockOperatorSet(basis=basis, params=params,
                           diag_interaction=diag_u, diag_detuning=diag_v,
                           a_odd=a_odd, a_even=a_even)


def occupations(psi: np.ndarray, basis: FockBasis) -> np.ndarray:
    """Per-site occupation fractions <n_j>/N of a normalized state."""
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-6:
        raise StaleStateError(f"state norm {norm} deviates from 1 by more than 1e-6")
    weights = np.abs(psi) ** 2
    return (weights @ basis.states) / (norm ** 2 * basis.N)


def site_reversal_permutation(basis: FockBasis) -> np.ndarray:
    """Permutation p with state[p[i]] = reversed(state[i])."""
    rev_keys = basis.states[:, ::-1] @ basis.powers
    return np.searchsorted(basis.keys, rev_keys)


def instantaneous_spectrum(theta: float, params: ModelParams, basis: FockBasis,
                           ops: FockOperatorSet | None = None,
                           cap: int = DEFAULT_DENSE_CAP):
    """Dense eigenpairs of H(theta), eigenvalues ascending."""
    if basis.dim > cap:
        raise CapacityError(
            f"dimension {basis.dim} exceeds the dense-diagonalization cap {cap}; "
            "a sparse interior solver is out of scope")
    if ops is None:
        ops = assemble_operators(basis, params)
    energies, vectors = np.linalg.eigh(ops.dense_hamiltonian(theta))
    return energies, vectors


def dump_basis(basis: FockBasis, path) -> None:
    """Write one occupation vector per line, space-separated."""
    with open(path, "w") as fh:
        for row in basis.states:
            fh.write(" ".join(str(int(x)) for x in row) + "\n")
