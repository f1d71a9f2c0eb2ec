"""Command-line driver.

Subcommands: mft, twa, qmb, stability, poincare, chaos, scan-rates,
scan-eps, trace. Each run resolves its parameters (config file, then CLI
overrides), writes CSVs under <out>/runs/<config-hash>/ and appends a
manifest record. Exit codes: 0 success, 2 partial (some scan rows failed),
3 configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__
from .chaos import (energy_scatter, participation_number, poincare_section,
                    distance_from_sp, section_seed_fan)
from .classical import integrate_trajectory
from .errors import BhcError, ParameterError
from .fockspace import assemble_operators, build_basis, dump_basis
from .model import (ModelParams, SweepProtocol, THETA_END, load_config,
                    resolve_params)
from .quantum import (QuantumState, StepControl, level_overlap_trace,
                      propagate_quantum)
from .runio import (RunManifest, write_cloud_csv, write_level_trace_csv,
                    write_scatter_csv, write_section_csv, write_stability_csv,
                    write_table_csv, write_trajectory_csv, write_windows_jsonl)
from .scan import scan_rates, scan_epsilon, trace_run, worker_count
from .stability import continue_branch, regime_borders
from .twa import calibrate_width, propagate_cloud, sample_cloud

LONG_RUN_STEPS = 10_000_000


class _Parser(argparse.ArgumentParser):
    """argparse that exits with the documented configuration-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(3, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value parameter file")
    p.add_argument("-M", type=int, default=None, help="site count")
    p.add_argument("-N", type=int, default=None, help="particle number")
    p.add_argument("-u", type=float, default=None, help="dimensionless interaction")
    p.add_argument("-v", type=float, default=None, help="dimensionless detuning")
    p.add_argument("-U", type=float, default=None, help="on-site interaction (energy)")
    p.add_argument("-V", type=float, default=None, help="middle-site detuning (energy)")
    p.add_argument("-K", type=float, default=None, help="hopping scale (default 1)")
    p.add_argument("--rate-exp", type=float, default=None,
                   help="sweep rate exponent k: rate = (pi/2) * 10^-k")
    p.add_argument("--out", default=".", help="output root (runs/<hash>/ below it)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--samples", type=int, default=501, help="observable samples")
    p.add_argument("--deterministic", action="store_true",
                   help="single worker, fixed reduction order")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (or env BHCSWEEP_WORKERS)")
    p.add_argument("--yes", action="store_true",
                   help="confirm runs above the long-run step guard")


def _resolve(args, need_rate=True):
    file_values = load_config(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in
                 ("M", "N", "U", "V", "K", "u", "v")}
    if args.rate_exp is not None:
        overrides["rate_exponent"] = args.rate_exp
    params, extra = resolve_params(file_values, overrides)
    protocol = None
    if "rate_exponent" in extra:
        protocol = SweepProtocol.from_exponent(extra["rate_exponent"])
    elif need_rate:
        raise ParameterError("a sweep rate is required: --rate-exp or "
                             "rate_exponent in the config file")
    return params, protocol, extra


def _settings(args, protocol, **kw) -> dict:
    settings = {"seed": args.seed, "samples": args.samples,
                "deterministic": bool(args.deterministic)}
    if protocol is not None:
        settings["rate_exponent"] = protocol.rate_exponent
    settings.update(kw)
    return settings


def _finish(manifest: RunManifest, args, extra=None) -> int:
    path = manifest.write(args.out, extra)
    print(f"run {manifest.hash}: wrote {len(manifest.outputs)} file(s), "
          f"manifest {path}")
    return 0


def _cmd_mft(args) -> int:
    params, protocol, _ = _resolve(args)
    manifest = RunManifest("mft", params, _settings(args, protocol))
    psi0 = np.zeros(params.M, dtype=complex)
    psi0[0] = 1.0
    traj = integrate_trajectory(psi0, protocol, params, samples=args.samples)
    out = write_trajectory_csv(manifest.run_dir(args.out) / "trace_mft.csv",
                               traj, params, ("method: mft",))
    manifest.add_output(out)
    print(f"mft P_drain = {traj.occupations[-1, -1]:.6f}")
    return _finish(manifest, args, {"p_drain": traj.occupations[-1, -1]})


def _cmd_twa(args) -> int:
    params, protocol, _ = _resolve(args)
    w = args.w
    if args.epsilon is not None:
        w = calibrate_width(params, args.epsilon, n_traj=args.n_traj,
                            seed=args.seed)
    manifest = RunManifest("twa", params, _settings(
        args, protocol, n_traj=args.n_traj, w=w))
    cloud = sample_cloud(params, n_traj=args.n_traj, w=w, seed=args.seed)
    result = propagate_cloud(cloud, protocol, params, samples=args.samples)
    run_dir = manifest.run_dir(args.out)
    out = write_trajectory_csv(run_dir / "trace_twa.csv", result, params,
                               (f"method: twa, n_traj={cloud.n_traj}, "
                                f"w={w!r}, epsilon={cloud.epsilon!r}",))
    manifest.add_output(out)
    if args.dump_cloud:
        manifest.add_output(write_cloud_csv(run_dir / "cloud.csv", cloud))
    print(f"twa P_drain = {result.p_drain:.6f} +- {result.p_drain_stderr:.6f} "
          f"(epsilon = {cloud.epsilon:.6f})")
    return _finish(manifest, args, {"p_drain": result.p_drain,
                                    "stderr": result.p_drain_stderr,
                                    "epsilon": cloud.epsilon})


def _estimate_steps(params, protocol, ctrl) -> int:
    basis = build_basis(params.M, params.N)
    ops = assemble_operators(basis, params)
    dt = min(ctrl.c1 / ops.norm_bound(), ctrl.c2 / protocol.rate)
    return int(math.ceil(protocol.t_total / dt))


def _cmd_qmb(args) -> int:
    params, protocol, _ = _resolve(args)
    ctrl = StepControl(samples=args.samples)
    est = _estimate_steps(params, protocol, ctrl)
    print(f"estimated propagation steps: {est}")
    if est > LONG_RUN_STEPS and not args.yes:
        print(f"more than {LONG_RUN_STEPS} steps; rerun with --yes to proceed",
              file=sys.stderr)
        return 3
    manifest = RunManifest("qmb", params, _settings(args, protocol))
    basis = build_basis(params.M, params.N)
    ops = assemble_operators(basis, params)
    checkpoints = (np.linspace(0.0, THETA_END, args.level_grid)
                   if args.levels else None)
    traj = propagate_quantum(QuantumState(basis.source_state()), protocol,
                             ops, ctrl, checkpoint_thetas=checkpoints)
    run_dir = manifest.run_dir(args.out)
    out = write_trajectory_csv(run_dir / "trace_qmb.csv", traj, params,
                               (f"method: qmb, dim={basis.dim}",))
    manifest.add_output(out)
    if args.levels:
        trace = level_overlap_trace(traj, ops, threshold=args.level_threshold)
        manifest.add_output(
            write_level_trace_csv(run_dir / "levels.csv", trace, params))
    if args.dump_basis:
        path = run_dir / "basis.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        dump_basis(basis, path)
        manifest.add_output(path)
    p = traj.occupations[-1, -1]
    print(f"qmb P_drain = {p:.6f}")
    return _finish(manifest, args, {"p_drain": float(p)})


def _cmd_stability(args) -> int:
    params, protocol, _ = _resolve(args, need_rate=False)
    manifest = RunManifest("stability", params, _settings(
        args, protocol, grid=args.grid))
    profile = continue_branch(params, np.linspace(0.0, THETA_END, args.grid))
    borders = regime_borders(profile)
    run_dir = manifest.run_dir(args.out)
    manifest.add_output(write_stability_csv(run_dir / "stability.csv", profile))
    manifest.add_output(write_windows_jsonl(run_dir / "windows.jsonl",
                                            profile.windows))
    for lo, hi in profile.windows:
        print(f"unstable window: [{lo:.3f}, {hi:.3f}] rad")
    print(f"borders: sudden/diabatic rate ~ {borders.rate_sudden_diabatic:.4g}, "
          f"diabatic/quasistatic rate ~ {borders.rate_diabatic_quasistatic:.4g}, "
          f"I_im = {borders.integrated_im:.4g}")
    return _finish(manifest, args, {
        "windows": [list(w) for w in profile.windows],
        "border_sudden_diabatic": borders.rate_sudden_diabatic,
        "border_diabatic_quasistatic": borders.rate_diabatic_quasistatic,
        "integrated_im": borders.integrated_im,
        "max_im": borders.max_im,
        "border_average": "uniform-in-theta mean of max over modes"})


def _cmd_poincare(args) -> int:
    params, _, _ = _resolve(args, need_rate=False)
    from .stability import find_sp
    manifest = RunManifest("poincare", params, _settings(
        args, None, theta=args.theta, t_max=args.t_max, n_dirs=args.fan))
    sp = find_sp(args.theta, params)
    seeds = section_seed_fan(sp, params, n_dirs=args.fan,
                             energy=args.energy)
    points = poincare_section(args.theta, params, seeds, t_max=args.t_max,
                              sp=sp)
    out = write_section_csv(manifest.run_dir(args.out) / "section.csv", points)
    manifest.add_output(out)
    total = sum(len(p) for p in points)
    print(f"{len(seeds)} seeds, {total} crossings")
    return _finish(manifest, args, {"crossings": total})


def sp_distance_signal(theta: float, params: ModelParams,
                       perturbation: float = 1e-3, t_max: float = 2000.0,
                       seed: int = 0, n_samples: int | None = None,
                       sp=None) -> tuple[np.ndarray, np.ndarray]:
    """r(t) = distance from the stationary point of a trajectory launched
    at the given offset from it, frozen Hamiltonian, uniform sampling."""
    from .classical import integrate_batch
    from .stability import find_sp
    if sp is None:
        sp = find_sp(theta, params)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 941]))
    delta = rng.standard_normal(params.M) + 1j * rng.standard_normal(params.M)
    psi0 = sp.psi + perturbation * delta / np.linalg.norm(delta)
    psi0 = psi0 / np.linalg.norm(psi0)
    if n_samples is None:
        n_samples = 1 << max(10, math.ceil(math.log2(t_max / 0.25)))
    t_eval = np.linspace(0.0, t_max, n_samples)
    sol = integrate_batch(psi0, params.g, params, lambda t: theta,
                          (0.0, t_max), t_eval=t_eval)
    states = sol.y.T.copy().view(np.complex128).reshape(-1, params.M)
    r = np.array([distance_from_sp(s, sp.psi) for s in states])
    return t_eval, r


def _cmd_chaos(args) -> int:
    params, protocol, _ = _resolve(args, need_rate=(args.mode == "scatter"))
    if args.mode == "pn":
        manifest = RunManifest("chaos", params, _settings(
            args, None, mode="pn", theta=args.theta, t_max=args.t_max,
            perturbation=args.perturbation))
        t, r = sp_distance_signal(args.theta, params,
                                  perturbation=args.perturbation,
                                  t_max=args.t_max, seed=args.seed)
        score = participation_number(r)
        out = write_table_csv(
            manifest.run_dir(args.out) / "pn_signal.csv",
            ["t", "r"], ([t[i], r[i]] for i in range(t.size)),
            (f"PN = {score.pn!r} over {score.n_bins} bins", score.definition))
        manifest.add_output(out)
        print(f"participation number = {score.pn:.2f} ({score.n_bins} bins)")
        return _finish(manifest, args, {"pn": score.pn, "n_bins": score.n_bins})
    manifest = RunManifest("chaos", params, _settings(
        args, protocol, mode="scatter", n_traj=args.n_traj, w=args.w))
    cloud = sample_cloud(params, n_traj=args.n_traj, w=args.w, seed=args.seed)
    result = propagate_cloud(cloud, protocol, params, samples=args.samples)
    scatter = energy_scatter(result, params)
    out = write_scatter_csv(manifest.run_dir(args.out) / "scatter.csv", scatter)
    manifest.add_output(out)
    print(f"pearson r = {scatter.pearson:.4f} over {cloud.n_traj} trajectories")
    return _finish(manifest, args, {"pearson_r": scatter.pearson})


def _cmd_scan_rates(args) -> int:
    params, _, _ = _resolve(args, need_rate=False)
    exponents = [float(x) for x in args.rate_exps.split(",")]
    methods = args.methods.split(",")
    manifest = RunManifest("scan-rates", params, _settings(
        args, None, methods=methods, rate_exponents=exponents,
        n_traj=args.n_traj, w=args.w))
    rows = scan_rates(params, methods, exponents, n_traj=args.n_traj,
                      w=args.w, seed=args.seed, samples=args.samples,
                      workers=worker_count(args.workers, args.deterministic))
    table = [[r.method, r.rate_exponent,
              "" if r.p_drain is None else r.p_drain,
              "" if r.stderr is None else r.stderr,
              r.error or ""] for r in rows]
    out = write_table_csv(manifest.run_dir(args.out) / "scan_rates.csv",
                          ["method", "rate_exponent", "p_drain", "stderr", "error"],
                          table, ("transfer efficiency versus sweep rate",))
    manifest.add_output(out)
    failed = [r for r in rows if not r.ok]
    for r in rows:
        val = "failed" if not r.ok else f"{r.p_drain:.4f}"
        print(f"  {r.method} k={r.rate_exponent}: {val}")
    _finish(manifest, args, {"failed_rows": len(failed)})
    return 2 if failed else 0


def _cmd_scan_eps(args) -> int:
    params, protocol, _ = _resolve(args)
    epsilons = [float(x) for x in args.epsilons.split(",")]
    qmb_ns = [int(x) for x in args.qmb_n.split(",")] if args.qmb_n else []
    manifest = RunManifest("scan-eps", params, _settings(
        args, protocol, epsilons=epsilons, qmb_particle_numbers=qmb_ns,
        n_traj=args.n_traj))
    twa_rows, qmb_rows = scan_epsilon(params, protocol, epsilons,
                                      qmb_particle_numbers=qmb_ns,
                                      n_traj=args.n_traj, seed=args.seed,
                                      samples=args.samples)
    table = [["twa", r.target_epsilon, r.measured_epsilon, r.width_scale,
              r.p_drain, r.stderr, r.plateau, ""] for r in twa_rows]
    failed = 0
    for n, p, err in qmb_rows:
        table.append(["qmb_ref", "", "", "", "" if p is None else p, "", "",
                      err or f"N={n}"])
        failed += p is None
    out = write_table_csv(
        manifest.run_dir(args.out) / "scan_eps.csv",
        ["kind", "target_epsilon", "measured_epsilon", "width_scale",
         "p_drain", "stderr", "plateau", "note"],
        table, ("efficiency versus cloud energy width",))
    manifest.add_output(out)
    for r in twa_rows:
        print(f"  eps={r.target_epsilon}: P={r.p_drain:.4f} +- {r.stderr:.4f}"
              f"{' (plateau)' if r.plateau else ''}")
    _finish(manifest, args, {"failed_rows": failed})
    return 2 if failed else 0


def _cmd_trace(args) -> int:
    params, protocol, _ = _resolve(args)
    methods = args.methods.split(",")
    manifest = RunManifest("trace", params, _settings(
        args, protocol, methods=methods, n_traj=args.n_traj, w=args.w))
    trajectories, windows = trace_run(params, protocol, methods,
                                      n_traj=args.n_traj, w=args.w,
                                      seed=args.seed, samples=args.samples)
    run_dir = manifest.run_dir(args.out)
    for method, traj in trajectories.items():
        out = write_trajectory_csv(run_dir / f"trace_{method}.csv", traj,
                                   params, (f"method: {method}",))
        manifest.add_output(out)
    manifest.add_output(write_windows_jsonl(run_dir / "windows.jsonl", windows))
    return _finish(manifest, args, {"windows": [list(w) for w in windows]})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bhcsweep",
                     description="Bose-Hubbard chain adiabatic-passage toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mft", help="single mean-field sweep")
    _add_common(p)
    p.set_defaults(func=_cmd_mft)

    p = sub.add_parser("twa", help="truncated-Wigner cloud sweep")
    _add_common(p)
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--w", type=float, default=1.0, help="cloud width scale")
    p.add_argument("--epsilon", type=float, default=None,
                   help="calibrate w to this energy width instead of --w")
    p.add_argument("--dump-cloud", action="store_true")
    p.set_defaults(func=_cmd_twa)

    p = sub.add_parser("qmb", help="exact quantum sweep")
    _add_common(p)
    p.add_argument("--levels", action="store_true",
                   help="also write the adiabatic-level overlap trace")
    p.add_argument("--level-grid", type=int, default=200)
    p.add_argument("--level-threshold", type=float, default=1e-3)
    p.add_argument("--dump-basis", action="store_true")
    p.set_defaults(func=_cmd_qmb)

    p = sub.add_parser("stability", help="stationary-point branch and windows")
    _add_common(p)
    p.add_argument("--grid", type=int, default=501)
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("poincare", help="frozen-theta Poincare section")
    _add_common(p)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--t-max", type=float, default=1000.0)
    p.add_argument("--fan", type=int, default=24, help="fan seed count")
    p.add_argument("--energy", type=float, default=None,
                   help="seed energy shell (default: SP energy)")
    p.set_defaults(func=_cmd_poincare)

    p = sub.add_parser("chaos", help="participation number / energy scatter")
    _add_common(p)
    p.add_argument("--mode", choices=("pn", "scatter"), default="scatter")
    p.add_argument("--theta", type=float, default=0.7854)
    p.add_argument("--t-max", type=float, default=2000.0)
    p.add_argument("--perturbation", type=float, default=1e-3)
    p.add_argument("--n-traj", type=int, default=200)
    p.add_argument("--w", type=float, default=1.0)
    p.set_defaults(func=_cmd_chaos)

    p = sub.add_parser("scan-rates", help="efficiency versus sweep rate")
    _add_common(p)
    p.add_argument("--methods", default="mft,twa,qmb")
    p.add_argument("--rate-exps", required=True,
                   help="comma-separated exponents, e.g. 2,3,4")
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--w", type=float, default=1.0)
    p.set_defaults(func=_cmd_scan_rates)

    p = sub.add_parser("scan-eps", help="efficiency versus cloud width")
    _add_common(p)
    p.add_argument("--epsilons", required=True,
                   help="comma-separated energy widths")
    p.add_argument("--qmb-n", default="",
                   help="comma-separated particle numbers for QMB reference rows")
    p.add_argument("--n-traj", type=int, default=1000)
    p.set_defaults(func=_cmd_scan_eps)

    p = sub.add_parser("trace", help="P_drain time traces with window markers")
    _add_common(p)
    p.add_argument("--methods", default="mft,twa")
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--w", type=float, default=1.0)
    p.set_defaults(func=_cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    except BhcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
