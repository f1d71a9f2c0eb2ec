"""Phase-space diagnostics: Poincare sections at frozen protocol angle,
cloud snapshots in section coordinates, spectral participation number,
and driven-sweep energy decorrelation.

Section chart (three-site chain, U(1)-reduced): p1 = n1/N, p2 = n2/N,
q1 = phi1 - phi3, q2 = phi2 - phi3. The cut is q2 = q2(SP) with crossings
counted in the positive direction (dq2/dt > 0); points are reported as
(radius, angle) = (1 - n1/N, q1). For longer chains the same first-site
chart applies with the last site as the phase reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .classical import DEFAULT_RTOL, classical_energy, integrate_batch
from .errors import ParameterError, StatisticsError
from .model import ModelParams, THETA_END
from .stability import StationaryPoint
from .twa import CloudTrajectory

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SectionPoint:
    """One section crossing (or snapshot) in first-site polar coordinates."""

    radius: float        # 1 - n1/N, in [0, 1]
    angle: float         # conjugate phase q1, in (-pi, pi]
    energy: float        # E/N of the source trajectory
    color_value: float   # time-averaged n2/N of the source trajectory
    time: float = float("nan")   # crossing time (nan for snapshots)


#: spectral participation of one Hann-windowed on-bin line (0.25, 0.5, 0.25)
HANN_LINE_PN = 2.0


@dataclass(frozen=True)
class ChaosScore:
    """Participation number of the power spectrum of a distance signal.

    Normalized by the Hann single-line participation, so a monochromatic
    signal scores ~1 (leakage keeps it below 1.2) and broadband motion
    scores of order the bin count.
    """

    pn: float
    n_bins: int
    definition: str = ("PN = (sum S)^2 / sum S^2 over rfft bins of the "
                       "mean-subtracted, Hann-tapered signal, divided by "
                       "the Hann single-line participation 2.0")


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    return -((-np.asarray(a) + math.pi) % TWO_PI - math.pi)


def first_site_coords(psi: np.ndarray) -> tuple[float, float]:
    """(radius, angle) of a state in the first-site chart."""
    psi = np.asarray(psi, dtype=complex)
    norm2 = float((np.abs(psi) ** 2).sum())
    radius = 1.0 - abs(psi[0]) ** 2 / norm2
    angle = float(wrap_angle(np.angle(psi[0]) - np.angle(psi[-1])))
    return radius, angle


def q2_of(psi: np.ndarray) -> float:
    """Middle-site conjugate phase q2 = phi2 - phi_last."""
    psi = np.asarray(psi, dtype=complex)
    return float(wrap_angle(np.angle(psi[1]) - np.angle(psi[-1])))


def chart_to_psi(p1: float, q1: float, p2: float, q2: float) -> np.ndarray:
    """Inverse chart for the three-site chain (phi3 = 0 gauge)."""
    p3 = 1.0 - p1 - p2
    if min(p1, p2, p3) < -1e-12:
        raise ParameterError(f"occupations out of range: {(p1, p2, p3)}")
    return np.array([math.sqrt(max(p1, 0.0)) * np.exp(1j * q1),
                     math.sqrt(max(p2, 0.0)) * np.exp(1j * q2),
                     math.sqrt(max(p3, 0.0))], dtype=complex)


def distance_from_sp(psi: np.ndarray, psi_sp: np.ndarray) -> float:
    """r = sqrt(1 - |<sp|psi>|^2); invariant under global phases."""
    psi = np.asarray(psi, dtype=complex)
    psi_sp = np.asarray(psi_sp, dtype=complex)
    overlap = abs(np.vdot(psi_sp, psi)) ** 2 \
        / ((np.abs(psi) ** 2).sum() * (np.abs(psi_sp) ** 2).sum())
    return math.sqrt(max(0.0, 1.0 - float(overlap)))


def participation_number(signal: np.ndarray, window: str = "hann") -> ChaosScore:
    """Inverse purity of the power spectrum of a uniformly sampled signal."""
    r = np.asarray(signal, dtype=float)
    if r.size < 2 ** 10:
        raise ParameterError(
            f"need at least 2^10 samples for a stable spectrum, got {r.size}")
    centered = r - r.mean()
    if np.abs(centered).max() == 0.0:
        n_bins = r.size // 2 + 1
        return ChaosScore(pn=1.0, n_bins=n_bins)
    if window == "hann":
        taper = np.hanning(r.size)
        baseline = HANN_LINE_PN
    elif window in (None, "none", "rect"):
        taper = np.ones(r.size)
        baseline = 1.0
    else:
        raise ParameterError(f"unknown window {window!r}")
    spectrum = np.abs(np.fft.rfft(centered * taper)) ** 2
    raw = float(spectrum.sum() ** 2 / (spectrum ** 2).sum())
    return ChaosScore(pn=max(1.0, raw / baseline), n_bins=spectrum.size)


def _frozen_dense_solution(psi0: np.ndarray, theta: float, params: ModelParams,
                           scale: float, t_max: float, rtol: float):
    sol = integrate_batch(psi0, scale, params, lambda t: theta,
                          (0.0, t_max), rtol=rtol, dense_output=True)
    M = len(psi0)

    def state(t) -> np.ndarray:
        values = np.ascontiguousarray(sol.sol(t).T).view(np.complex128)
        return values.reshape(-1, M) if np.ndim(t) else values.reshape(M)

    return state


@dataclass
class SectionResult:
    """Per-seed crossing lists plus the conventions that produced them."""

    per_seed: list[list[SectionPoint]]
    q2_cut: float
    direction: int      # +1: dq2/dt > 0 crossings, -1: dq2/dt < 0

    def __iter__(self):
        return iter(self.per_seed)

    def __getitem__(self, i):
        return self.per_seed[i]

    def __len__(self):
        return len(self.per_seed)


def poincare_section(theta: float, params: ModelParams, seeds,
                     t_max: float = 1000.0, sp: StationaryPoint | None = None,
                     q2_cut: float | None = None, direction: int | str = "auto",
                     sample_dt: float = 0.2, rtol: float = DEFAULT_RTOL,
                     scale: float | None = None) -> SectionResult:
    """Crossings of q2 = q2(SP) for each seed under the frozen Hamiltonian.

    direction: +1 counts dq2/dt > 0 crossings, -1 the opposite; "auto"
    picks the majority direction over all seeds (q2 winds one way in large
    parts of parameter space, where a fixed positive convention would
    return nothing) and records it in the result.

    Seeds that never cross within t_max yield empty lists. Crossing times
    are bracketed on a uniform sample grid and bisected to 1e-8.
    """
    if q2_cut is None:
        if sp is None:
            from .stability import find_sp
            sp = find_sp(theta, params)
        if abs(sp.psi[1]) ** 2 < 1e-14:
            raise ParameterError(
                "q2 is ill defined at this stationary point (n2 = 0); "
                "pass an explicit q2_cut")
        q2_cut = q2_of(sp.psi)
    g = params.g if scale is None else scale
    times = np.arange(0.0, t_max + sample_dt, sample_dt)
    prepared = []
    n_up = n_down = 0
    for seed in np.atleast_2d(np.asarray(seeds, dtype=complex)):
        seed = seed / np.linalg.norm(seed)
        state = _frozen_dense_solution(seed, theta, params, g, t_max, rtol)
        samples = state(times)
        n2 = np.abs(samples[:, 1]) ** 2 / (np.abs(samples) ** 2).sum(axis=1)
        s_vals = wrap_angle(np.angle(samples[:, 1]) - np.angle(samples[:, -1])
                            - q2_cut)
        up = (s_vals[:-1] < 0.0) & (s_vals[1:] >= 0.0) \
            & (np.diff(s_vals) < math.pi)
        down = (s_vals[:-1] >= 0.0) & (s_vals[1:] < 0.0) \
            & (-np.diff(s_vals) < math.pi)
        n_up += int(up.sum())
        n_down += int(down.sum())
        energy = classical_energy(seed, theta, params, scale=g)
        prepared.append((state, s_vals, n2, energy, up, down))
    if direction == "auto":
        sign = 1 if n_up >= n_down else -1
    else:
        sign = int(direction)
        if sign not in (1, -1):
            raise ParameterError("direction must be +1, -1 or 'auto'")
    per_seed: list[list[SectionPoint]] = []
    for state, s_vals, n2, energy, up, down in prepared:
        crossings = up if sign > 0 else down

        def offset(t: float) -> float:
            return float(sign * wrap_angle(q2_of(state(t)) - q2_cut))

        points: list[SectionPoint] = []
        color = float(n2.mean())
        for i in np.nonzero(crossings)[0]:
            if min(n2[i], n2[i + 1]) < 1e-14:
                continue        # q2 ill defined where the middle site empties
            s0, s1 = sign * s_vals[i], sign * s_vals[i + 1]
            try:
                t_cross = brentq(offset, times[i], times[i + 1], xtol=1e-8)
            except ValueError:
                # noise-level crossing (s ~ eps): the sampled bracket is not
                # reproducible at re-evaluation; linear estimate is exact
                # to the same noise level
                t_cross = times[i] + (times[i + 1] - times[i]) * s0 / (s0 - s1)
            psi_c = state(t_cross)
            radius, angle = first_site_coords(psi_c)
            points.append(SectionPoint(radius=radius, angle=angle,
                                       energy=energy, color_value=color,
                                       time=float(t_cross)))
        per_seed.append(points)
    return SectionResult(per_seed=per_seed, q2_cut=float(q2_cut),
                         direction=sign)


def section_seed_fan(sp: StationaryPoint, params: ModelParams,
                     n_dirs: int = 24, energy: float | None = None,
                     rho_steps=(0.2, 0.35, 0.5, 0.65),
                     q2_cut: float | None = None) -> np.ndarray:
    """Seeds on the section at a fixed energy (default: the SP energy).

    Walks n_dirs rays from the SP in the (p1, q1) plane; for each ray the
    middle-site occupation is solved so the seed sits on the energy shell.
    Rays that never intersect the shell are skipped.
    """
    if params.M != 3:
        raise ParameterError("the seed fan is defined on the three-site chart")
    if q2_cut is None:
        if abs(sp.psi[1]) ** 2 < 1e-14:
            q2_cut = math.pi  # continuity limit of the branch near pi/4
        else:
            q2_cut = q2_of(sp.psi)
    e_target = sp.energy if energy is None else energy
    norm2 = float((np.abs(sp.psi) ** 2).sum())
    p1_sp = abs(sp.psi[0]) ** 2 / norm2
    _, q1_sp = first_site_coords(sp.psi)
    seeds = []
    for k in range(n_dirs):
        gamma = TWO_PI * k / n_dirs
        for rho in rho_steps:
            p1 = p1_sp + 0.4 * rho * math.cos(gamma)
            q1 = q1_sp + math.pi * rho * math.sin(gamma)
            if not 0.0 < p1 < 1.0:
                continue

            def shell(p2: float) -> float:
                psi = chart_to_psi(p1, q1, p2, q2_cut)
                return classical_energy(psi, sp.theta, params) - e_target

            p2_max = 1.0 - p1 - 1e-9
            grid = np.linspace(1e-9, p2_max, 40)
            vals = [shell(p) for p in grid]
            bracket = next((j for j in range(len(grid) - 1)
                            if vals[j] * vals[j + 1] <= 0.0), None)
            if bracket is None:
                continue
            p2 = brentq(shell, grid[bracket], grid[bracket + 1], xtol=1e-12)
            seeds.append(chart_to_psi(p1, q1, p2, q2_cut))
            break
    if not seeds:
        raise ParameterError("no fan seeds found on the requested energy shell")
    return np.array(seeds)


def final_cloud_section(result: CloudTrajectory, params: ModelParams,
                        theta: float = THETA_END) -> list[SectionPoint]:
    """Instantaneous snapshot of a swept ensemble in section coordinates."""
    points = []
    for psi, scale in zip(result.final_psis, result.scales):
        norm = np.linalg.norm(psi)
        radius, angle = first_site_coords(psi)
        energy = classical_energy(psi / norm, theta, params, scale=scale)
        n2 = abs(psi[1]) ** 2 / norm ** 2
        points.append(SectionPoint(radius=radius, angle=angle,
                                   energy=energy, color_value=float(n2)))
    return points


@dataclass
class EnergyScatter:
    """Initial-vs-final trajectory energies of a driven ensemble."""

    initial: np.ndarray
    final: np.ndarray
    pearson: float


def energy_scatter(result: CloudTrajectory, params: ModelParams) -> EnergyScatter:
    """Per-trajectory (E_initial/N, E_final/N) pairs with their correlation."""
    n = result.final_psis.shape[0]
    if n < 10:
        raise StatisticsError(f"need at least 10 trajectories, got {n}")
    finals = result.final_psis
    norms = np.linalg.norm(finals, axis=1)
    e_final = np.array([
        classical_energy(finals[i] / norms[i], THETA_END, params,
                         scale=result.scales[i]) for i in range(n)])
    e_init = np.asarray(result.initial_energies)
    pearson = float(np.corrcoef(e_init, e_final)[0, 1])
    return EnergyScatter(initial=e_init, final=e_final, pearson=pearson)
