"""CSV writers and run manifests.

Every numeric output is CSV with leading '#' comment lines naming units,
then one header row. Manifests are JSON-lines files; a run directory is
runs/<config-hash>/ where the hash fingerprints the fully resolved
configuration, so re-running a manifest lands in the same place and (with
the determinism flag) reproduces the bytes.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .model import ModelParams, derive_dimensionless

TIME_UNIT_NOTE = "units: energies in K, times in 1/K, angles in rad"


def config_hash(payload: dict) -> str:
    """Content hash (sha256, 12 hex chars) of a canonical-JSON payload."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def params_record(params: ModelParams) -> dict:
    u, v = derive_dimensionless(params)
    return {"M": params.M, "N": params.N, "U": params.U, "V": params.V,
            "K": params.K, "u": u, "v": v}


def _write_csv(path: Path, comments: list[str], header: list[str],
               rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return path


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_trajectory_csv(path, traj, params: ModelParams,
                         extra_comments: tuple = ()) -> Path:
    """Shared sweep-trajectory schema for the MFT/TWA/QMB engines."""
    M = params.M
    comments = [TIME_UNIT_NOTE,
                "columns: t, theta, n_j/N fractions, energy per particle, |norm-1|",
                *extra_comments]
    header = (["t", "theta"] + [f"n{j+1}" for j in range(M)]
              + ["energy_per_particle", "norm_error"])
    norm_err = np.broadcast_to(np.atleast_1d(getattr(traj, "norm_error")),
                               traj.t.shape)
    rows = (
        [traj.t[i], traj.theta[i], *traj.occupations[i],
         traj.energy_per_particle[i], norm_err[i]]
        for i in range(traj.t.size))
    return _write_csv(Path(path), comments, header, rows)


def write_level_trace_csv(path, trace, params: ModelParams) -> Path:
    comments = [TIME_UNIT_NOTE,
                f"overlap threshold {trace.threshold}; level_index -1 is the residual bucket"]
    header = ["theta", "level_index", "energy_per_particle", "weight",
              "drain_population"]
    return _write_csv(Path(path), comments, header, trace.rows)


def write_stability_csv(path, profile) -> Path:
    M = profile.params.M
    comments = [TIME_UNIT_NOTE,
                "omega_k: Bogoliubov eigenvalues sorted by (Im, Re)",
                "borders use the uniform-in-theta mean of the max over modes"]
    header = ["theta"]
    for k in range(2 * M):
        header += [f"re_omega_{k}", f"im_omega_{k}"]
    header += ["e_sp_per_particle", "mu"]
    rows = []
    for theta, point in zip(profile.thetas, profile.points):
        row = [theta]
        for w in point.frequencies:
            row += [w.real, w.imag]
        row += [point.energy, point.mu]
        rows.append(row)
    return _write_csv(Path(path), comments, header, rows)


def write_windows_jsonl(path, windows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for lo, hi in windows:
            fh.write(json.dumps({"theta_lo": lo, "theta_hi": hi}) + "\n")
    return path


def write_section_csv(path, section) -> Path:
    comments = [TIME_UNIT_NOTE,
                "color_value: time-averaged n2/N of the source trajectory"]
    if hasattr(section, "direction"):
        arrow = ">" if section.direction > 0 else "<"
        comments.insert(1, f"crossings of q2 = {section.q2_cut!r} "
                           f"with dq2/dt {arrow} 0")
    header = ["seed_index", "crossing_time", "radius", "angle",
              "energy_per_particle", "color_value"]
    rows = []
    for i, points in enumerate(section):
        for p in points:
            rows.append([i, p.time, p.radius, p.angle, p.energy, p.color_value])
    return _write_csv(Path(path), comments, header, rows)


def write_scatter_csv(path, scatter) -> Path:
    comments = [TIME_UNIT_NOTE,
                f"pearson_r = {scatter.pearson!r}"]
    header = ["traj_index", "E_initial", "E_final"]
    rows = ([i, scatter.initial[i], scatter.final[i]]
            for i in range(scatter.initial.size))
    return _write_csv(Path(path), comments, header, rows)


def write_cloud_csv(path, cloud) -> Path:
    M = cloud.params.M
    comments = [TIME_UNIT_NOTE,
                f"width_scale w = {cloud.width_scale!r}, seed = {cloud.seed}",
                "alpha in amplitude units (sum |alpha|^2 ~ N)"]
    header = ["traj_index"]
    for j in range(M):
        header += [f"re_alpha_{j+1}", f"im_alpha_{j+1}"]
    rows = []
    for i, alpha in enumerate(cloud.alphas):
        row = [i]
        for a in alpha:
            row += [a.real, a.imag]
        rows.append(row)
    return _write_csv(Path(path), comments, header, rows)


def write_table_csv(path, header, rows, comments=()) -> Path:
    return _write_csv(Path(path), [TIME_UNIT_NOTE, *comments], list(header), rows)


class RunManifest:
    """Collects resolved settings and produced files for one CLI run."""

    def __init__(self, command: str, params: ModelParams, settings: dict):
        self.command = command
        self.params = params_record(params)
        self.settings = dict(settings)
        self.outputs: list[str] = []
        self.started = time.time()
        self.hash = config_hash({"command": command, "params": self.params,
                                 "settings": self.settings})

    def run_dir(self, out_root) -> Path:
        return Path(out_root) / "runs" / self.hash

    def add_output(self, path) -> None:
        self.outputs.append(Path(path).name)

    def record(self, extra: dict | None = None) -> dict:
        rec = {
            "command": self.command,
            "config_hash": self.hash,
            "tool_version": __version__,
            "params": self.params,
            "settings": self.settings,
            "outputs": sorted(self.outputs),
            "wall_clock_s": round(time.time() - self.started, 3),
        }
        if extra:
            rec.update(extra)
        return rec

    def write(self, out_root, extra: dict | None = None) -> Path:
        path = self.run_dir(out_root) / "manifest.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a") as fh:
            fh.write(json.dumps(self.record(extra), sort_keys=True) + "\n")
        return path


def read_manifest(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
