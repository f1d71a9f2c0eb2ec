"""Exact many-body propagation over the Fock basis (QMB tier).

The propagator applies short-time Krylov (Lanczos) exponentials of the
instantaneous H(theta(t)), piecewise constant per step with the midpoint
angle. Step size dt = min(c1/||H||, c2/rate); each Lanczos vector is
reorthogonalized against the whole small basis, so the norm is conserved
to round-off independent of the truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.sparse import csr_matrix

from .errors import IntegrationError, NormDriftError, PartialRunError
from .fockspace import FockOperatorSet, instantaneous_spectrum, occupations
from .model import THETA_END, SweepProtocol

NORM_DRIFT_BOUND = 1e-9


@dataclass
class QuantumState:
    """Amplitudes over the Fock basis at protocol time t, angle theta."""

    amplitudes: np.ndarray
    t: float = 0.0
    theta: float = 0.0

    def norm_error(self) -> float:
        return abs(np.linalg.norm(self.amplitudes) - 1.0)


@dataclass(frozen=True)
class StepControl:
    """Krylov stepping knobs: dt = min(c1/||H||, c2/rate)."""

    c1: float = 0.5                 # dt * ||H|| budget
    c2: float = 1e-3                # protocol angle per step (rad)
    krylov_dim: int = 12
    tolerance: float = 1e-10        # per-step truncation tolerance
    samples: int = 501              # observable samples over the sweep
    min_dt: float = 1e-12

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class QuantumTrajectory:
    """Sampled observables of one sweep plus the final state."""

    t: np.ndarray
    theta: np.ndarray
    occupations: np.ndarray         # (samples, M), <n_j>/N
    energy_per_particle: np.ndarray
    norm_error: np.ndarray
    final: QuantumState
    checkpoints: list[QuantumState] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return bool(self.theta[-1] >= THETA_END - 1e-9)


class CombinedHamiltonian:
    """Union-pattern sparse H(theta) whose data is refreshed in place, so a
    sweep of millions of steps never reallocates matrix structure."""

    def __init__(self, ops: FockOperatorSet):
        self.ops = ops
        dim = ops.basis.dim
        odd = ops.a_odd.tocoo()
        even = ops.a_even.tocoo()
        idx = np.arange(dim)
        rows = np.concatenate([odd.row, even.row, idx])
        cols = np.concatenate([odd.col, even.col, idx])
        # one set of coordinates, three data layers: identical union pattern
        # for all layers (stored zeros are kept, only duplicates merge)
        def layer(values, offset, count):
            data = np.zeros(rows.size)
            data[offset:offset + count] = values
            mat = csr_matrix((data, (rows, cols)), shape=(dim, dim))
            mat.sum_duplicates()
            mat.sort_indices()
            return mat

        self._odd = layer(odd.data, 0, odd.nnz)
        self._even = layer(even.data, odd.nnz, even.nnz)
        self._diag = layer(ops.diagonal, odd.nnz + even.nnz, dim)
        assert (self._odd.indptr == self._even.indptr).all()
        assert (self._odd.indices == self._even.indices).all()
        assert (self._odd.indptr == self._diag.indptr).all()
        self.matrix = self._odd.copy()
        self.norm_bound = ops.norm_bound()
        self.set_theta(0.0)

    def set_theta(self, theta: float) -> None:
        c_odd, c_even = self.ops.coefficients(theta)
        np.multiply(self._odd.data, c_odd, out=self.matrix.data)
        self.matrix.data += c_even * self._even.data
        self.matrix.data += self._diag.data


def _expm_small(alpha, beta, k, dt):
    evals, evecs = eigh_tridiagonal(alpha[:k], beta[1:k])
    return evecs @ (np.exp(-1j * dt * evals) * evecs[0])


def lanczos_expm_apply(ham: CombinedHamiltonian, psi: np.ndarray,
                       dt: float, ctrl: StepControl,
                       theta: float = float("nan"),
                       work: np.ndarray | None = None) -> np.ndarray:
    """exp(-i dt H) @ psi by Lanczos with one reorthogonalization pass.

    Convergence is estimated from the next off-diagonal times the last
    component of the small exponential; checks at dimensions 6, 8, 10
    usually stop the recurrence before the cap. Steps that miss the
    tolerance at the cap are halved recursively.
    """
    H = ham.matrix
    matvec = H.dot
    dim = psi.shape[0]
    m = min(ctrl.krylov_dim, dim)
    basis = work if work is not None and work.shape == (ctrl.krylov_dim, dim) \
        else np.empty((max(m, 1), dim), dtype=complex)
    alpha = np.empty(m)
    beta = np.empty(m)
    basis[0] = psi
    w = matvec(psi)
    alpha[0] = np.vdot(basis[0], w).real
    w -= alpha[0] * basis[0]
    k = 1
    beta_next = math.sqrt(np.vdot(w, w).real)
    y = None
    checks = (6, 8, 10)
    for j in range(1, m):
        if beta_next < 1e-13:
            break                       # invariant subspace, result exact
        if j in checks:
            y = _expm_small(alpha, beta, j, dt)
            if beta_next * abs(y[-1]) <= ctrl.tolerance:
                k = j
                break
            y = None
        beta[j] = beta_next
        vec = w
        vec /= beta_next
        overlap = basis[:j] @ vec.conj()
        vec -= overlap.conj() @ basis[:j]
        vec /= math.sqrt(np.vdot(vec, vec).real)
        basis[j] = vec
        w = matvec(vec)
        w -= beta[j] * basis[j - 1]
        alpha[j] = np.vdot(vec, w).real
        w -= alpha[j] * vec
        k = j + 1
        beta_next = math.sqrt(np.vdot(w, w).real)
    if y is None:
        y = _expm_small(alpha, beta, k, dt)
    if k == ctrl.krylov_dim and beta_next * abs(y[-1]) > ctrl.tolerance:
        if dt / 2.0 < ctrl.min_dt:
            raise IntegrationError(
                f"Krylov step underflow at theta={theta:.6f}: dt={dt:.3e}, "
                f"||H|| estimate {ham.norm_bound:.3e}", theta=theta)
        half = lanczos_expm_apply(ham, psi, dt / 2.0, ctrl, theta, work=work)
        return lanczos_expm_apply(ham, half, dt / 2.0, ctrl, theta, work=work)
    return y @ basis[:k]


def _checkpoint_times(protocol: SweepProtocol, thetas) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    return thetas / protocol.rate


def propagate_quantum(initial: QuantumState, protocol: SweepProtocol,
                      ops: FockOperatorSet, ctrl: StepControl = StepControl(),
                      checkpoint_thetas=None) -> QuantumTrajectory:
    """Propagate through the full sweep, sampling occupations and energy.

    checkpoint_thetas: optional angles at which full state snapshots are kept
    (used for level-overlap traces).
    """
    psi = np.array(initial.amplitudes, dtype=complex)
    norm0 = np.linalg.norm(psi)
    if abs(norm0 - 1.0) > 1e-9:
        raise NormDriftError(f"initial state norm {norm0} is not 1")
    basis = ops.basis
    t_total = protocol.t_total
    sample_t = np.linspace(0.0, t_total, ctrl.samples)
    check_t = _checkpoint_times(protocol, checkpoint_thetas) \
        if checkpoint_thetas is not None else np.empty(0)
    # event times where the stepper must land exactly
    events = np.unique(np.concatenate([sample_t, check_t]))
    ham = CombinedHamiltonian(ops)
    dt_base = min(ctrl.c1 / ham.norm_bound, ctrl.c2 / protocol.rate)
    work = np.empty((ctrl.krylov_dim, basis.dim), dtype=complex)

    sample_set = set(np.round(sample_t, 12))
    check_set = set(np.round(check_t, 12))
    occ_rows, energy_rows, norm_rows, t_rows, theta_rows = [], [], [], [], []
    checkpoints: list[QuantumState] = []

    def record(t_now: float):
        key = np.round(t_now, 12)
        theta_now = float(protocol.theta_of(t_now))
        if key in sample_set:
            nrm = np.linalg.norm(psi)
            t_rows.append(t_now)
            theta_rows.append(theta_now)
            occ_rows.append(np.abs(psi / nrm) ** 2 @ basis.states / basis.N)
            energy_rows.append(ops.expectation(theta_now, psi / nrm) / basis.N)
            norm_rows.append(abs(nrm - 1.0))
        if key in check_set:
            checkpoints.append(QuantumState(psi.copy(), t=t_now, theta=theta_now))

    record(0.0)
    t_prev = 0.0
    theta_of = protocol.theta_of
    for t_next in events[events > 1e-15]:
        span = t_next - t_prev
        nsub = max(1, int(math.ceil(span / dt_base)))
        dt = span / nsub
        for i in range(nsub):
            theta_mid = float(theta_of(t_prev + (i + 0.5) * dt))
            ham.set_theta(theta_mid)
            psi = lanczos_expm_apply(ham, psi, dt, ctrl, theta_mid, work=work)
        t_prev = t_next
        record(t_next)

    drift = abs(np.linalg.norm(psi) - 1.0)
    if drift > NORM_DRIFT_BOUND:
        raise NormDriftError(f"norm drift {drift:.3e} exceeds {NORM_DRIFT_BOUND}")
    final = QuantumState(psi, t=t_prev, theta=float(protocol.theta_of(t_prev)))
    return QuantumTrajectory(
        t=np.asarray(t_rows), theta=np.asarray(theta_rows),
        occupations=np.asarray(occ_rows),
        energy_per_particle=np.asarray(energy_rows),
        norm_error=np.asarray(norm_rows), final=final, checkpoints=checkpoints)


def propagate_frozen(state: QuantumState, theta: float, ops: FockOperatorSet,
                     t_span: float, ctrl: StepControl = StepControl()) -> QuantumTrajectory:
    """Propagate under the frozen H(theta) for a time t_span."""
    psi = np.array(state.amplitudes, dtype=complex)
    basis = ops.basis
    ham = CombinedHamiltonian(ops)
    ham.set_theta(theta)
    dt_base = ctrl.c1 / ham.norm_bound
    work = np.empty((ctrl.krylov_dim, basis.dim), dtype=complex)
    sample_t = np.linspace(0.0, t_span, ctrl.samples)
    occ_rows, energy_rows, norm_rows = [], [], []
    t_prev = 0.0
    occ_rows.append(occupations(psi, basis))
    energy_rows.append(ops.expectation(theta, psi) / basis.N)
    norm_rows.append(abs(np.linalg.norm(psi) - 1.0))
    for t_next in sample_t[1:]:
        span = t_next - t_prev
        nsub = max(1, int(math.ceil(span / dt_base)))
        dt = span / nsub
        for _ in range(nsub):
            psi = lanczos_expm_apply(ham, psi, dt, ctrl, theta, work=work)
        t_prev = t_next
        nrm = np.linalg.norm(psi)
        occ_rows.append(np.abs(psi / nrm) ** 2 @ basis.states / basis.N)
        energy_rows.append(ops.expectation(theta, psi / nrm) / basis.N)
        norm_rows.append(abs(nrm - 1.0))
    drift = abs(np.linalg.norm(psi) - 1.0)
    if drift > NORM_DRIFT_BOUND:
        raise NormDriftError(f"norm drift {drift:.3e} exceeds {NORM_DRIFT_BOUND}")
    final = QuantumState(psi, t=t_span, theta=theta)
    return QuantumTrajectory(
        t=sample_t, theta=np.full_like(sample_t, theta),
        occupations=np.asarray(occ_rows),
        energy_per_particle=np.asarray(energy_rows),
        norm_error=np.asarray(norm_rows), final=final)


def transfer_efficiency(traj: QuantumTrajectory) -> float:
    """P_drain = <n_M>/N at the end of a completed sweep."""
    if not traj.completed:
        raise PartialRunError(
            f"sweep stopped at theta={traj.theta[-1]:.6f} < pi/2; "
            "transfer efficiency undefined")
    return float(traj.occupations[-1, -1])


@dataclass
class LevelTrace:
    """Adiabatic-level overlaps along the sweep.

    rows: (theta, level_index, energy_per_particle, weight, drain_population)
    with level_index = -1 marking the residual bucket.
    """

    thetas: np.ndarray
    rows: list[tuple]
    threshold: float

    def retained_at(self, theta: float) -> list[tuple]:
        return [r for r in self.rows if r[0] == theta and r[1] >= 0]


def level_overlap_trace(traj: QuantumTrajectory, ops: FockOperatorSet,
                        threshold: float = 1e-3,
                        dense_cap: int = 5000) -> LevelTrace:
    """Project checkpoint states onto instantaneous eigenlevels.

    Keeps levels with weight >= threshold plus one residual bucket per theta,
    so retained weights and the bucket always sum to 1.
    """
    if not traj.checkpoints:
        raise PartialRunError("trajectory carries no checkpoints; "
                              "rerun propagate_quantum with checkpoint_thetas")
    basis = ops.basis
    drain_n = basis.states[:, -1] / basis.N
    rows = []
    thetas = []
    for snap in traj.checkpoints:
        theta = snap.theta
        energies, vectors = instantaneous_spectrum(theta, ops.params, basis,
                                                   ops=ops, cap=dense_cap)
        amps = vectors.conj().T @ snap.amplitudes
        weights = np.abs(amps) ** 2
        total = weights.sum()
        if abs(total - 1.0) > 1e-6:
            raise NormDriftError(f"overlap completeness violated: sum={total}")
        keep = np.nonzero(weights >= threshold)[0]
        for k in keep:
            drain_k = float((np.abs(vectors[:, k]) ** 2) @ drain_n)
            rows.append((theta, int(k), float(energies[k] / basis.N),
                         float(weights[k]), drain_k))
        residual = float(total - weights[keep].sum())
        rows.append((theta, -1, float("nan"), residual, float("nan")))
        thetas.append(theta)
    return LevelTrace(thetas=np.asarray(thetas), rows=rows, threshold=threshold)
