"""Scan drivers behind the CLI: efficiency-vs-rate, efficiency-vs-epsilon
and multi-method time traces. Rows are independent; failures are recorded
per row and the scan continues.
"""

from __future__ import annotations

import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .classical import integrate_trajectory, mft_efficiency
from .errors import BhcError
from .fockspace import assemble_operators, build_basis
from .model import ModelParams, SweepProtocol
from .quantum import (QuantumState, StepControl, propagate_quantum,
                      transfer_efficiency)
from .stability import continue_branch
from .twa import propagate_cloud, sample_cloud

METHODS = ("mft", "twa", "qmb")


@dataclass
class ScanRow:
    key: tuple
    method: str
    rate_exponent: float
    p_drain: float | None
    stderr: float | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def worker_count(requested: int | None = None,
                 deterministic: bool = False) -> int:
    if deterministic:
        return 1
    if requested:
        return max(1, requested)
    env = os.environ.get("BHCSWEEP_WORKERS")
    return max(1, int(env)) if env else 1


def run_method(method: str, params: ModelParams, protocol: SweepProtocol,
               n_traj: int = 1000, w: float = 1.0, seed: int = 0,
               samples: int = 201, ctrl: StepControl | None = None):
    """One engine run; returns (p_drain, stderr_or_None)."""
    if method == "mft":
        return mft_efficiency(protocol, params), None
    if method == "twa":
        cloud = sample_cloud(params, n_traj=n_traj, w=w, seed=seed)
        result = propagate_cloud(cloud, protocol, params, samples=samples)
        return result.p_drain, result.p_drain_stderr
    if method == "qmb":
        basis = build_basis(params.M, params.N)
        ops = assemble_operators(basis, params)
        ctrl = ctrl or StepControl(samples=samples)
        traj = propagate_quantum(QuantumState(basis.source_state()), protocol,
                                 ops, ctrl)
        return transfer_efficiency(traj), None
    raise ValueError(f"unknown method {method!r}")


def _row_task(args) -> ScanRow:
    (method, exponent, params_fields, n_traj, w, seed, samples) = args
    params = ModelParams(**params_fields)
    try:
        protocol = SweepProtocol.from_exponent(exponent)
        p, se = run_method(method, params, protocol, n_traj=n_traj, w=w,
                           seed=seed, samples=samples)
        return ScanRow(key=(method, exponent), method=method,
                       rate_exponent=exponent, p_drain=p, stderr=se)
    except (BhcError, ValueError) as exc:
        return ScanRow(key=(method, exponent), method=method,
                       rate_exponent=exponent, p_drain=None, stderr=None,
                       error=f"{type(exc).__name__}: {exc}")
    except Exception:
        return ScanRow(key=(method, exponent), method=method,
                       rate_exponent=exponent, p_drain=None, stderr=None,
                       error=traceback.format_exc(limit=3))


def scan_rates(params: ModelParams, methods, exponents, n_traj: int = 1000,
               w: float = 1.0, seed: int = 0, samples: int = 201,
               workers: int = 1) -> list[ScanRow]:
    """Transfer efficiency versus sweep rate, one row per (method, rate)."""
    fields = {"M": params.M, "N": params.N, "U": params.U, "V": params.V,
              "K": params.K}
    tasks = [(m, float(k), fields, n_traj, w, seed, samples)
             for m in methods for k in sorted(exponents)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row_task, tasks))
    else:
        rows = [_row_task(t) for t in tasks]
    return sorted(rows, key=lambda r: r.key)


def scan_epsilon(params: ModelParams, protocol: SweepProtocol, epsilons,
                 qmb_particle_numbers=(), n_traj: int = 1000, seed: int = 0,
                 samples: int = 201):
    """Fig-2-style table: TWA rows per epsilon plus QMB reference rows per N.

    Returns (twa_rows, qmb_rows) where twa_rows are EpsilonScanRow and
    qmb_rows are (N, P_drain or None, error or None).
    """
    from .twa import efficiency_vs_epsilon
    twa_rows = efficiency_vs_epsilon(params, protocol, epsilons,
                                     n_traj=n_traj, seed=seed, samples=samples)
    qmb_rows = []
    for n in qmb_particle_numbers:
        ref = ModelParams(M=params.M, N=int(n), U=params.g / int(n),
                          V=params.V, K=params.K)
        try:
            p, _ = run_method("qmb", ref, protocol, samples=samples)
            qmb_rows.append((int(n), p, None))
        except BhcError as exc:
            qmb_rows.append((int(n), None, f"{type(exc).__name__}: {exc}"))
    return twa_rows, qmb_rows


def trace_run(params: ModelParams, protocol: SweepProtocol, methods,
              n_traj: int = 1000, w: float = 1.0, seed: int = 0,
              samples: int = 501, stability_grid: int = 501):
    """Time traces per method plus the instability windows of the branch.

    Returns (trajectories: dict method -> trajectory, windows: list).
    """
    trajectories = {}
    for method in methods:
        if method == "mft":
            psi0 = np.zeros(params.M, dtype=complex)
            psi0[0] = 1.0
            trajectories[method] = integrate_trajectory(
                psi0, protocol, params, samples=samples)
        elif method == "twa":
            cloud = sample_cloud(params, n_traj=n_traj, w=w, seed=seed)
            trajectories[method] = propagate_cloud(cloud, protocol, params,
                                                   samples=samples)
        elif method == "qmb":
            basis = build_basis(params.M, params.N)
            ops = assemble_operators(basis, params)
            trajectories[method] = propagate_quantum(
                QuantumState(basis.source_state()), protocol, ops,
                StepControl(samples=samples))
        else:
            raise ValueError(f"unknown method {method!r}")
    profile = continue_branch(
        params, np.linspace(0.0, np.pi / 2, stability_grid))
    return trajectories, profile.windows
