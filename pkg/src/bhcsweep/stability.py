"""Central stationary point of the mean-field flow and its Bogoliubov
stability along the sweep.

The stationary point solves (H0(theta) + g P) psi = mu psi with
P = diag(|psi_j|^2) in hopping units (H0 carries K). On an open chain every
such fixed point can be gauged real, so the Newton solve runs in real
arithmetic with the normalization appended as a bordered equation. Small
oscillations around the point are governed by the matrix

    [[ h, -g P], [ g P, -h ]],   h = H0 + 2 g P - mu,

whose eigenvalues come in +/- pairs; a nonzero imaginary part marks a
hyperbolic (unstable) stretch of the sweep.

Closed forms at theta = pi/4 use the instantaneous bond coupling
Omega = K/sqrt(2); with u = sqrt(2) N U / K this makes the dimensionless
frequencies consistent with the u = 0 single-particle limit omega = K/2.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .classical import classical_energy
from .errors import BranchLossError, ParameterError
from .model import ModelParams, THETA_END, single_particle_hamiltonian

SQRT2 = math.sqrt(2.0)
RESIDUAL_TOL = 1e-11
ZERO_MODE_TOL = 1e-8
DEFAULT_IM_TOL = 1e-6
CONTINUITY_BOUND = 0.1
MIN_STEP = 1e-6


@dataclass(frozen=True)
class StationaryPoint:
    """One point of the central (dark-state-connected) branch."""

    theta: float
    psi: np.ndarray            # complex, per-particle normalized, psi_1 >= 0
    mu: float                  # chemical potential, per-particle units
    energy: float              # E_SP / N
    frequencies: np.ndarray    # 2M Bogoliubov eigenvalues, sorted by (Im, Re)
    residual: float

    @property
    def max_im(self) -> float:
        return float(self.frequencies.imag.max())

    @property
    def max_re(self) -> float:
        return float(self.frequencies.real.max())

    @property
    def unstable(self) -> bool:
        return self.max_im > DEFAULT_IM_TOL


def _newton_solve(theta: float, params: ModelParams, seed: np.ndarray,
                  mu0: float, tol: float = 1e-13, max_iter: int = 50):
    """Bordered real Newton for the fixed point; returns (psi, mu) or None."""
    M = params.M
    H0 = single_particle_hamiltonian(theta, params)
    g = params.g
    psi = np.asarray(seed, dtype=float).copy()
    psi /= np.linalg.norm(psi)
    mu = float(mu0)
    eye = np.eye(M)
    for _ in range(max_iter):
        F = H0 @ psi + g * psi ** 3 - mu * psi
        C = psi @ psi - 1.0
        err = math.sqrt(float(F @ F) + C * C)
        if err < tol:
            return psi, mu
        J = np.empty((M + 1, M + 1))
        J[:M, :M] = H0 + np.diag(3.0 * g * psi ** 2) - mu * eye
        J[:M, M] = -psi
        J[M, :M] = 2.0 * psi
        J[M, M] = 0.0
        try:
            step = np.linalg.solve(J, -np.concatenate([F, [C]]))
        except np.linalg.LinAlgError:
            return None
        psi = psi + step[:M]
        mu = mu + step[M]
    return None


def _gauge_fix(psi: np.ndarray, reference: np.ndarray | None = None) -> np.ndarray:
    """Overall sign: psi_1 >= 0, falling back to alignment with a reference
    when psi_1 vanishes (theta = pi/2 endpoint)."""
    if abs(psi[0]) > 1e-10:
        return psi if psi[0] > 0 else -psi
    if reference is not None and float(np.real(reference) @ psi) < 0:
        return -psi
    return psi


def bogoliubov_matrix(sp: StationaryPoint | tuple, params: ModelParams,
                      theta: float | None = None) -> np.ndarray:
    """2M x 2M small-oscillation matrix around a stationary point."""
    if isinstance(sp, StationaryPoint):
        psi, mu, theta = sp.psi, sp.mu, sp.theta
    else:
        psi, mu = sp
        if theta is None:
            raise ParameterError("theta required when passing a raw (psi, mu)")
    M = params.M
    H0 = single_particle_hamiltonian(theta, params)
    P = np.diag(np.abs(np.asarray(psi)) ** 2)
    h = H0 + 2.0 * params.g * P - mu * np.eye(M)
    g = params.g
    return np.block([[h, -g * P], [g * P, -h]])


def bogoliubov_modes(sp: StationaryPoint, params: ModelParams):
    """Eigenvalues and right eigenvectors of the Bogoliubov matrix.

    A perturbation seeded along delta = x - conj(y), with (x, y) the upper
    and lower blocks of an unstable eigenvector, grows at Im(omega); the
    sign accounts for the lower block carrying -conj(delta) dynamics.
    """
    B = bogoliubov_matrix(sp, params)
    evals, evecs = np.linalg.eig(B)
    return evals, evecs


def _sorted_freqs(B: np.ndarray) -> np.ndarray:
    evals = np.linalg.eigvals(B)
    order = np.lexsort((evals.real, evals.imag))
    return evals[order]


def find_sp(theta: float, params: ModelParams, seed_point=None,
            mu_seed: float | None = None) -> StationaryPoint:
    """Point solve for the stationary point; the seed must lie in the Newton
    basin (continuation guarantees this, see continue_branch)."""
    if seed_point is None:
        sp = _continue_to(theta, params)
        return sp
    seed = np.real(np.asarray(seed_point, dtype=complex))
    seed = seed / np.linalg.norm(seed)
    if mu_seed is None:
        H0 = single_particle_hamiltonian(theta, params)
        mu0 = float(seed @ (H0 @ seed) + params.g * np.sum(seed ** 4))
    else:
        mu0 = mu_seed
    result = _newton_solve(theta, params, seed, mu0)
    if result is None:
        raise BranchLossError(
            f"Newton did not converge at theta={theta:.6f}; refine the "
            "continuation step", theta=theta)
    psi, mu = result
    psi = _gauge_fix(psi, np.real(np.asarray(seed_point, dtype=complex)))
    return _make_sp(theta, psi, mu, params)


def _make_sp(theta: float, psi: np.ndarray, mu: float,
             params: ModelParams) -> StationaryPoint:
    H0 = single_particle_hamiltonian(theta, params)
    residual = float(np.linalg.norm(
        H0 @ psi + params.g * psi ** 3 - mu * psi))
    if residual > RESIDUAL_TOL:
        raise BranchLossError(
            f"stationary-point residual {residual:.2e} at theta={theta:.6f}",
            theta=theta)
    freqs = _sorted_freqs(bogoliubov_matrix((psi, mu), params, theta=theta))
    energy = classical_energy(psi.astype(complex), theta, params)
    return StationaryPoint(theta=theta, psi=psi.astype(complex), mu=mu,
                           energy=energy, frequencies=freqs,
                           residual=residual)


def _walk(params: ModelParams, theta_from: float, psi: np.ndarray, mu: float,
          theta_to: float, step0: float):
    """Continuation walk with step halving; yields nothing, returns end state."""
    theta = theta_from
    step = step0 if theta_to > theta_from else -step0
    while (theta_to - theta) * np.sign(step) > 1e-15:
        dt = step if abs(theta_to - theta) > abs(step) else theta_to - theta
        attempt = _newton_solve(theta + dt, params, psi, mu)
        if attempt is not None:
            cand_psi, cand_mu = attempt
            cand_psi = _gauge_fix(cand_psi, psi)
            if np.linalg.norm(cand_psi - psi) <= CONTINUITY_BOUND:
                theta += dt
                psi, mu = cand_psi, cand_mu
                continue
        if abs(dt) / 2.0 < MIN_STEP:
            raise BranchLossError(
                f"branch lost near theta={theta + dt:.6f} after maximal "
                "refinement", theta=theta + dt)
        step = dt / 2.0
    return psi, mu


def _continue_to(theta: float, params: ModelParams) -> StationaryPoint:
    """Walk the branch from the exact theta=0 solution (1, 0, ..) to theta."""
    psi0 = np.zeros(params.M)
    psi0[0] = 1.0
    psi, mu = _walk(params, 0.0, psi0, params.g, float(theta),
                    THETA_END / 100.0)
    psi = _gauge_fix(psi)
    return _make_sp(float(theta), psi, mu, params)


@dataclass
class RegimeBorders:
    """Sweep-rate borders from the Bogoliubov profile (rad per time unit).

    The averages are uniform-in-theta means of the max over modes; this
    averaging choice is recorded in output metadata wherever it is written.
    """

    rate_sudden_diabatic: float      # mean over theta of max Re omega
    rate_diabatic_quasistatic: float  # mean over theta of max Im omega
    integrated_im: float             # I_im = integral of max Im omega dtheta
    max_im: float                    # max over theta of max Im omega


@dataclass
class StabilityProfile:
    """Stationary-point branch over a theta grid with stability data."""

    params: ModelParams
    thetas: np.ndarray
    points: list[StationaryPoint]
    windows: list[tuple[float, float]] = field(default_factory=list)

    @property
    def max_im(self) -> np.ndarray:
        return np.array([p.max_im for p in self.points])

    @property
    def max_re(self) -> np.ndarray:
        return np.array([p.max_re for p in self.points])

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.energy for p in self.points])

    @property
    def borders(self) -> "RegimeBorders":
        return regime_borders(self)

    def point_at(self, theta: float) -> StationaryPoint:
        """Solve at an arbitrary angle, seeded from the nearest grid point."""
        i = min(max(bisect_left(self.thetas, theta), 0), len(self.points) - 1)
        if i > 0 and abs(self.thetas[i - 1] - theta) < abs(self.thetas[i] - theta):
            i -= 1
        near = self.points[i]
        psi, mu = _walk(self.params, near.theta, np.real(near.psi), near.mu,
                        float(theta), THETA_END / 500.0)
        return _make_sp(float(theta), _gauge_fix(psi, np.real(near.psi)), mu,
                        self.params)


def continue_branch(params: ModelParams, thetas=None) -> StabilityProfile:
    """Newton continuation of the central branch over a theta grid."""
    if thetas is None:
        thetas = np.linspace(0.0, THETA_END, 501)
    thetas = np.asarray(thetas, dtype=float)
    if thetas[0] != 0.0:
        raise ParameterError("the continuation grid must start at theta=0")
    psi = np.zeros(params.M)
    psi[0] = 1.0
    mu = params.g
    points = [_make_sp(0.0, psi.copy(), mu, params)]
    for i in range(1, thetas.size):
        step0 = max((thetas[i] - thetas[i - 1]) , MIN_STEP)
        psi, mu = _walk(params, thetas[i - 1], psi, mu, thetas[i],
                        min(step0, THETA_END / 500.0))
        psi = _gauge_fix(psi, np.real(points[-1].psi))
        points.append(_make_sp(float(thetas[i]), psi, mu, params))
    profile = StabilityProfile(params=params, thetas=thetas, points=points)
    profile.windows = instability_windows(profile)
    return profile


def instability_windows(profile: StabilityProfile,
                        tol_im: float | None = None,
                        refine: float = 1e-3) -> list[tuple[float, float]]:
    """Theta intervals with max Im omega > tol, edges refined by bisection."""
    tol = DEFAULT_IM_TOL * profile.params.K if tol_im is None else tol_im
    thetas = profile.thetas
    mask = profile.max_im > tol
    if not mask.any():
        return []

    def edge(lo: float, hi: float, lo_unstable: bool) -> float:
        while hi - lo > refine:
            mid = 0.5 * (lo + hi)
            unstable = profile.point_at(mid).max_im > tol
            if unstable == lo_unstable:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    windows = []
    idx = np.nonzero(mask)[0]
    groups = np.split(idx, np.nonzero(np.diff(idx) > 1)[0] + 1)
    for grp in groups:
        i0, i1 = grp[0], grp[-1]
        lo = thetas[i0] if i0 == 0 else edge(thetas[i0 - 1], thetas[i0], False)
        hi = thetas[i1] if i1 == thetas.size - 1 else edge(thetas[i1], thetas[i1 + 1], True)
        windows.append((float(lo), float(hi)))
    return windows


def regime_borders(profile: StabilityProfile) -> RegimeBorders:
    """Sudden/diabatic and diabatic/quasistatic borders plus I_im."""
    thetas = profile.thetas
    span = thetas[-1] - thetas[0]
    re_mean = float(np.trapezoid(profile.max_re, thetas) / span)
    im_int = float(np.trapezoid(profile.max_im, thetas))
    return RegimeBorders(rate_sudden_diabatic=re_mean,
                         rate_diabatic_quasistatic=im_int / span,
                         integrated_im=im_int,
                         max_im=float(profile.max_im.max()))


def closed_form_trimer_freqs(u: float, v: float, K: float = 1.0):
    """Bogoliubov frequencies (omega_plus, omega_minus, 0) at theta = pi/4
    for the three-site chain, restored to K units via Omega = K/sqrt(2).

    With w = u - 2v the two nonzero pairs are
        omega_pm = +/- Omega * sqrt(w^2 + 4 +/- sqrt(w^4 - 8 w (u + 2v)))
                   / (2 sqrt(2));
    a negative inner radicand continues to complex values and signals
    instability.
    """
    omega = K / SQRT2
    w = u - 2.0 * v
    A = w * w + 4.0
    root = np.sqrt(complex(w ** 4 - 8.0 * w * (u + 2.0 * v)))
    wp = omega * np.sqrt(A + root) / (2.0 * SQRT2)
    wm = -omega * np.sqrt(A - root) / (2.0 * SQRT2)
    return complex(wp), complex(wm), 0.0j
