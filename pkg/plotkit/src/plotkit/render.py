"""Panel renderers. Matplotlib only draws what the CSVs contain; the sidecar
JSON written next to each image records series counts and axis ranges so
tests can assert on stable metadata instead of image bytes."""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .recipes import FigureRecipe, RecipeError

HALF_PI = math.pi / 2.0


def _read_csv(path: Path, required: tuple[str, ...]) -> pd.DataFrame:
    if not Path(path).exists():
        raise RecipeError(f"input file does not exist: {path}")
    frame = pd.read_csv(path, comment="#")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise RecipeError(
            f"{path} is missing column(s) {missing}; found {list(frame.columns)}")
    return frame


def _read_windows(path: Path) -> list[tuple[float, float]]:
    windows = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                windows.append((rec["theta_lo"], rec["theta_hi"]))
    return windows


def _occupation_columns(frame: pd.DataFrame) -> list[str]:
    cols = [c for c in frame.columns if c.startswith("n") and c[1:].isdigit()]
    if not cols:
        raise RecipeError(f"no occupation columns n1..nM in {list(frame.columns)}")
    return sorted(cols, key=lambda c: int(c[1:]))


def render(recipe: FigureRecipe) -> dict:
    """Draw one panel and write image + sidecar; returns the sidecar dict."""
    handler = _HANDLERS.get(recipe.panel)
    if handler is None:
        raise RecipeError(f"unknown panel {recipe.panel!r}")
    fig = plt.figure(figsize=(6.0, 4.0))
    try:
        meta = handler(recipe, fig)
        if recipe.title:
            fig.suptitle(recipe.title)
        recipe.output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(recipe.output, dpi=130)
    finally:
        plt.close(fig)
    sidecar = {
        "panel": recipe.panel,
        "inputs": sorted(str(p) for p in recipe.inputs.values()),
        "output": str(recipe.output),
        **meta,
    }
    sidecar_path = Path(str(recipe.output) + ".json")
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return sidecar


def _apply_axes(ax, recipe):
    axes = recipe.axes
    if axes.get("xlog"):
        ax.set_xscale("log")
    if "xlim" in axes:
        ax.set_xlim(axes["xlim"])
    if "ylim" in axes:
        ax.set_ylim(axes["ylim"])


def _series_meta(ax, series, points):
    return {"series": int(series), "points": int(points),
            "xlim": [float(x) for x in ax.get_xlim()],
            "ylim": [float(y) for y in ax.get_ylim()]}


def _panel_rate_scan(recipe, fig):
    frame = _read_csv(recipe.inputs["data"],
                      ("method", "rate_exponent", "p_drain"))
    frame = frame[pd.notna(frame["p_drain"])]
    ax = fig.add_subplot()
    ax.set_xscale("log")
    styles = {"mft": "r-o", "twa": "g-s", "qmb": "b:^"}
    n_series = 0
    for method, grp in frame.groupby("method"):
        rate = HALF_PI * 10.0 ** (-grp["rate_exponent"].to_numpy(float))
        y = grp["p_drain"].to_numpy(float)
        err = grp["stderr"].to_numpy(float) if "stderr" in grp else None
        if err is not None and np.isfinite(err).any():
            ax.errorbar(rate, y, yerr=err, fmt=styles.get(method, "-x"),
                        label=method, capsize=2)
        else:
            ax.plot(rate, y, styles.get(method, "-x"), label=method)
        n_series += 1
    ax.set_xlabel("sweep rate (rad per time unit)")
    ax.set_ylabel("transfer efficiency")
    ax.legend()
    _apply_axes(ax, recipe)
    return _series_meta(ax, n_series, len(frame))


def _panel_epsilon_scan(recipe, fig):
    frame = _read_csv(recipe.inputs["data"], ("kind", "p_drain"))
    ax = fig.add_subplot()
    twa = frame[frame["kind"] == "twa"]
    if "measured_epsilon" not in frame.columns:
        raise RecipeError(f"{recipe.inputs['data']} is missing column(s) "
                          "['measured_epsilon']")
    n_series = 0
    if len(twa):
        ax.errorbar(twa["measured_epsilon"].to_numpy(float),
                    twa["p_drain"].to_numpy(float),
                    yerr=twa["stderr"].to_numpy(float),
                    fmt="g-o", capsize=2, label="twa")
        n_series += 1
    refs = frame[frame["kind"] == "qmb_ref"]
    for _, row in refs.iterrows():
        if pd.notna(row["p_drain"]):
            ax.axhline(float(row["p_drain"]), ls="--", lw=1.0,
                       label=str(row.get("note", "qmb")))
            n_series += 1
    ax.set_xlabel("cloud energy width (units of K)")
    ax.set_ylabel("transfer efficiency")
    ax.legend()
    _apply_axes(ax, recipe)
    return _series_meta(ax, n_series, len(twa) + len(refs))


def _panel_trace(recipe, fig):
    ax = fig.add_subplot()
    n_series = 0
    points = 0
    windows = []
    for role, path in sorted(recipe.inputs.items()):
        if role == "windows":
            windows = _read_windows(path)
            continue
        frame = _read_csv(path, ("theta",))
        occ = _occupation_columns(frame)
        ax.plot(frame["theta"].to_numpy(float),
                frame[occ[-1]].to_numpy(float), label=role)
        n_series += 1
        points += len(frame)
    for lo, hi in windows:
        ax.axvline(lo, color="k", ls="--", lw=1.0)
        ax.axvline(hi, color="k", ls="--", lw=1.0)
    ax.set_xlabel("theta (rad)")
    ax.set_ylabel("drain population")
    if n_series:
        ax.legend()
    _apply_axes(ax, recipe)
    meta = _series_meta(ax, n_series, points)
    meta["windows"] = len(windows)
    return meta


def _panel_levels(recipe, fig):
    frame = _read_csv(recipe.inputs["data"],
                      ("theta", "level_index", "energy_per_particle",
                       "weight", "drain_population"))
    kept = frame[frame["level_index"] >= 0]
    ax = fig.add_subplot()
    ax.scatter(kept["theta"], kept["energy_per_particle"], s=8, c="0.8",
               zorder=1)
    sc = ax.scatter(kept["theta"], kept["energy_per_particle"],
                    s=60 * kept["weight"].to_numpy(float) + 2,
                    c=kept["drain_population"].to_numpy(float),
                    cmap=recipe.colormap, vmin=0.0, vmax=1.0, zorder=2)
    fig.colorbar(sc, ax=ax, label="level drain population")
    ax.set_xlabel("theta (rad)")
    ax.set_ylabel("energy per particle (K units)")
    _apply_axes(ax, recipe)
    n_levels = kept["level_index"].nunique()
    return _series_meta(ax, n_levels, len(kept))


def _panel_section(recipe, fig):
    frame = _read_csv(recipe.inputs["data"],
                      ("seed_index", "radius", "angle", "color_value"))
    ax = fig.add_subplot(projection="polar")
    sc = ax.scatter(frame["angle"].to_numpy(float),
                    frame["radius"].to_numpy(float), s=3,
                    c=frame["color_value"].to_numpy(float),
                    cmap=recipe.colormap)
    ax.set_rlim(0.0, 1.0)
    fig.colorbar(sc, ax=ax, label="time-averaged n2/N")
    meta = {"series": int(frame["seed_index"].nunique()),
            "points": int(len(frame)),
            "rlim": [float(r) for r in ax.get_ylim()],
            "xlim": [float(x) for x in ax.get_xlim()],
            "ylim": [float(r) for r in ax.get_ylim()]}
    return meta


def _panel_stability(recipe, fig):
    frame = _read_csv(recipe.inputs["data"], ("theta",))
    im_cols = [c for c in frame.columns if c.startswith("im_omega_")]
    if not im_cols:
        raise RecipeError(
            f"{recipe.inputs['data']} is missing column(s) ['im_omega_*']")
    ax = fig.add_subplot()
    max_im = frame[im_cols].to_numpy(float).max(axis=1)
    ax.plot(frame["theta"].to_numpy(float), max_im, "m-",
            label="max Im omega")
    if "windows" in recipe.inputs:
        for lo, hi in _read_windows(recipe.inputs["windows"]):
            ax.axvspan(lo, hi, color="0.85")
    ax.set_xlabel("theta (rad)")
    ax.set_ylabel("max Im omega (K units)")
    ax.legend()
    _apply_axes(ax, recipe)
    return _series_meta(ax, 1, len(frame))


def _panel_scatter(recipe, fig):
    frame = _read_csv(recipe.inputs["data"], ("E_initial", "E_final"))
    ax = fig.add_subplot()
    ax.scatter(frame["E_initial"], frame["E_final"], s=8)
    lo = float(min(frame["E_initial"].min(), frame["E_final"].min()))
    hi = float(max(frame["E_initial"].max(), frame["E_final"].max()))
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("initial energy per particle")
    ax.set_ylabel("final energy per particle")
    _apply_axes(ax, recipe)
    return _series_meta(ax, 1, len(frame))


def _panel_pn_signal(recipe, fig):
    frame = _read_csv(recipe.inputs["data"], ("t", "r"))
    ax = fig.add_subplot()
    ax.plot(frame["t"], frame["r"], lw=0.7)
    ax.set_xlabel("t (1/K)")
    ax.set_ylabel("distance from SP")
    _apply_axes(ax, recipe)
    return _series_meta(ax, 1, len(frame))


def _panel_cloud(recipe, fig):
    frame = _read_csv(recipe.inputs["data"], ("traj_index",))
    re_cols = sorted(c for c in frame.columns if c.startswith("re_alpha_"))
    im_cols = sorted(c for c in frame.columns if c.startswith("im_alpha_"))
    if not re_cols or len(re_cols) != len(im_cols):
        raise RecipeError(
            f"{recipe.inputs['data']} is missing column(s) "
            "['re_alpha_j', 'im_alpha_j']")
    ax = fig.add_subplot()
    for re_c, im_c in zip(re_cols, im_cols):
        ax.scatter(frame[re_c], frame[im_c], s=5,
                   label=f"site {re_c.split('_')[-1]}")
    ax.set_xlabel("Re alpha")
    ax.set_ylabel("Im alpha")
    ax.legend()
    _apply_axes(ax, recipe)
    return _series_meta(ax, len(re_cols), len(frame) * len(re_cols))


_HANDLERS = {
    "rate_scan": _panel_rate_scan,
    "epsilon_scan": _panel_epsilon_scan,
    "trace": _panel_trace,
    "levels": _panel_levels,
    "section": _panel_section,
    "stability": _panel_stability,
    "scatter": _panel_scatter,
    "pn_signal": _panel_pn_signal,
    "cloud": _panel_cloud,
}
