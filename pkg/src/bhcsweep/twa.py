"""Truncated-Wigner tier: Gaussian phase-space cloud around the initial
condensate, classical propagation of every member, ensemble averages.

Seeds live in amplitude units, alpha_j = sqrt(N) psi0_j + w (xi + i eta)/sqrt(2)
with standard-normal xi, eta per mode; w = 1 is the half-quantum width of a
coherent state. Each trajectory is normalized once at t=0 and carries its own
interaction scale U * sum|alpha|^2, which is exactly the alpha-space dynamics;
observables are therefore already divided by the trajectory's own total.

Per-trajectory RNG streams derive from (seed, trajectory index), so a cloud's
first k members do not depend on n_traj and resampling is bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classical import (DEFAULT_RTOL, NORM_DRIFT_BOUND, energy_batch,
                        integrate_batch)
from .errors import CalibrationRangeError, NormDriftError, ParameterError
from .model import ModelParams, SweepProtocol, THETA_END

SQRT2 = math.sqrt(2.0)
DEFAULT_N_TRAJ = 1000
DEFAULT_CHUNK = 1024


@dataclass(frozen=True)
class Cloud:
    """Sampled ensemble of initial amplitudes with its sampling metadata."""

    params: ModelParams
    alphas: np.ndarray          # (n_traj, M) complex, amplitude units
    width_scale: float
    seed: int

    @property
    def n_traj(self) -> int:
        return self.alphas.shape[0]

    @property
    def norms_sq(self) -> np.ndarray:
        return (np.abs(self.alphas) ** 2).sum(axis=1)

    @property
    def psis(self) -> np.ndarray:
        """Unit-normalized trajectories."""
        return self.alphas / np.sqrt(self.norms_sq)[:, None]

    @property
    def scales(self) -> np.ndarray:
        """Per-trajectory interaction scales U * sum |alpha|^2."""
        return self.params.U * self.norms_sq

    def energies(self, theta: float = 0.0) -> np.ndarray:
        """Classical energy per particle of each seed at the given angle."""
        return energy_batch(self.psis, theta, self.params, self.scales)

    @property
    def epsilon(self) -> float:
        """Energy width: std of E/N over the seeds at t=0, theta=0 (K units).
        Always recomputed from the seeds."""
        if self.n_traj == 1:
            return 0.0
        return float(self.energies(0.0).std())


def sample_cloud(params: ModelParams, n_traj: int = DEFAULT_N_TRAJ,
                 w: float = 1.0, seed: int = 0) -> Cloud:
    """Draw the Wigner cloud around the all-on-site-1 condensate."""
    if n_traj < 1:
        raise ParameterError(f"need n_traj >= 1, got {n_traj}")
    if w < 0:
        raise ParameterError(f"need w >= 0, got {w}")
    M = params.M
    center = np.zeros(M, dtype=complex)
    center[0] = math.sqrt(params.N)
    alphas = np.empty((n_traj, M), dtype=complex)
    for i in range(n_traj):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, i]))
        noise = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        alphas[i] = center + w * noise / SQRT2
    return Cloud(params=params, alphas=alphas, width_scale=w, seed=seed)


def calibrate_width(params: ModelParams, target_epsilon: float,
                    n_traj: int = DEFAULT_N_TRAJ, seed: int = 0,
                    w_max: float = 8.0, rel_tol: float = 0.01) -> float:
    """Bisection on w so the measured cloud width matches target within 1%."""
    if target_epsilon < 0:
        raise ParameterError("target epsilon must be >= 0")
    if target_epsilon == 0.0:
        return 0.0

    def eps_of(w: float) -> float:
        return sample_cloud(params, n_traj, w, seed).epsilon

    hi_eps = eps_of(w_max)
    if hi_eps < target_epsilon:
        raise CalibrationRangeError(
            f"target epsilon {target_epsilon} not reachable below w_max={w_max} "
            f"(epsilon(w_max) = {hi_eps})", epsilon_at_wmax=hi_eps)
    lo, hi = 0.0, w_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        eps = eps_of(mid)
        if abs(eps - target_epsilon) <= rel_tol * target_epsilon:
            return mid
        if eps < target_epsilon:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class CloudTrajectory:
    """Ensemble-averaged sweep observables plus the final ensemble."""

    t: np.ndarray
    theta: np.ndarray
    occupations: np.ndarray            # (samples, M) ensemble means
    energy_per_particle: np.ndarray    # ensemble mean of per-trajectory E/N
    final_psis: np.ndarray             # (n_traj, M), each unit-normalized at t=0
    scales: np.ndarray                 # per-trajectory interaction scales
    initial_energies: np.ndarray       # per-trajectory E/N at theta=0
    p_drain_samples: np.ndarray        # per-trajectory final n_M fractions
    norm_error: float

    @property
    def p_drain(self) -> float:
        return float(self.p_drain_samples.mean())

    @property
    def p_drain_stderr(self) -> float:
        n = self.p_drain_samples.size
        if n < 2:
            return 0.0
        return float(self.p_drain_samples.std(ddof=1) / math.sqrt(n))

    @property
    def completed(self) -> bool:
        return bool(self.theta[-1] >= THETA_END - 1e-9)


def propagate_cloud(cloud: Cloud, protocol: SweepProtocol,
                    params: ModelParams | None = None,
                    rtol: float = DEFAULT_RTOL, samples: int = 501,
                    chunk: int = DEFAULT_CHUNK) -> CloudTrajectory:
    """Sweep every trajectory; averages are plain means over the ensemble.

    Chunks execute in a fixed order and reductions are per-sample sums, so
    results are deterministic for a given cloud.
    """
    params = cloud.params if params is None else params
    psis = cloud.psis
    scales = cloud.scales
    n_traj, M = psis.shape
    t_total = protocol.t_total
    t_eval = np.linspace(0.0, t_total, samples)
    occ_sum = np.zeros((samples, M))
    energy_sum = np.zeros(samples)
    finals = np.empty_like(psis)
    worst_drift = 0.0
    for c0 in range(0, n_traj, chunk):
        c1 = min(c0 + chunk, n_traj)
        sol = integrate_batch(psis[c0:c1], scales[c0:c1], params,
                              protocol.theta_of, (0.0, t_total),
                              t_eval=t_eval, rtol=rtol)
        B = c1 - c0
        Z = sol.y.T.copy().view(np.complex128).reshape(samples, B, M)
        norms2 = (np.abs(Z) ** 2).sum(axis=2)
        occ_sum += (np.abs(Z) ** 2 / norms2[:, :, None]).sum(axis=1)
        for k, t_k in enumerate(t_eval):
            theta_k = float(protocol.theta_of(t_k))
            e = energy_batch(Z[k] / np.sqrt(norms2[k])[:, None], theta_k,
                             params, scales[c0:c1])
            energy_sum[k] += e.sum()
        finals[c0:c1] = Z[-1]
        worst_drift = max(worst_drift,
                          float(np.abs(np.sqrt(norms2[-1]) - 1.0).max()))
    if worst_drift > NORM_DRIFT_BOUND:
        raise NormDriftError(
            f"cloud norm drift {worst_drift:.3e} exceeds {NORM_DRIFT_BOUND}")
    final_norms2 = (np.abs(finals) ** 2).sum(axis=1)
    p_drain_samples = np.abs(finals[:, -1]) ** 2 / final_norms2
    return CloudTrajectory(
        t=t_eval, theta=np.asarray(protocol.theta_of(t_eval)),
        occupations=occ_sum / n_traj,
        energy_per_particle=energy_sum / n_traj,
        final_psis=finals, scales=scales,
        initial_energies=cloud.energies(0.0),
        p_drain_samples=p_drain_samples,
        norm_error=worst_drift)


@dataclass
class EpsilonScanRow:
    target_epsilon: float
    measured_epsilon: float
    width_scale: float
    p_drain: float
    stderr: float
    plateau: bool


def efficiency_vs_epsilon(params: ModelParams, protocol: SweepProtocol,
                          epsilons, n_traj: int = DEFAULT_N_TRAJ,
                          seed: int = 0, rtol: float = DEFAULT_RTOL,
                          samples: int = 201) -> list[EpsilonScanRow]:
    """Mean P_drain against the cloud's energy width.

    The plateau flag marks rows whose value differs from the previous row
    by less than two combined standard errors.
    """
    rows: list[EpsilonScanRow] = []
    for eps in epsilons:
        w = calibrate_width(params, float(eps), n_traj=n_traj, seed=seed)
        cloud = sample_cloud(params, n_traj=n_traj, w=w, seed=seed)
        result = propagate_cloud(cloud, protocol, params, rtol=rtol,
                                 samples=samples)
        plateau = False
        if rows:
            prev = rows[-1]
            gap = abs(result.p_drain - prev.p_drain)
            err = 2.0 * math.hypot(result.p_drain_stderr, prev.stderr)
            plateau = gap < err
        rows.append(EpsilonScanRow(
            target_epsilon=float(eps), measured_epsilon=cloud.epsilon,
            width_scale=w, p_drain=result.p_drain,
            stderr=result.p_drain_stderr, plateau=plateau))
    return rows
