"""Figure recipes: declarative descriptions of one rendered panel.

A recipe is a JSON object:

    {
      "panel": "rate_scan" | "epsilon_scan" | "trace" | "levels"
               | "section" | "stability" | "scatter" | "pn_signal" | "cloud",
      "inputs": {"<role>": "path.csv", ...},
      "output": "figure.png",
      "title": "...",                # optional
      "axes": {"xlim": [a, b], "ylim": [a, b], "xlog": true},   # optional
      "colormap": "viridis"          # optional
    }

Input roles by panel: rate_scan/epsilon_scan/levels/section/scatter/pn_signal
take a single "data" CSV; trace takes one entry per series (any role names)
plus an optional "windows" JSON-lines file; stability takes "data" plus
optional "windows"; cloud takes "data". Recipes never recompute physics:
every number drawn comes from the referenced files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

PANELS = ("rate_scan", "epsilon_scan", "trace", "levels", "section",
          "stability", "scatter", "pn_signal", "cloud")


class RecipeError(ValueError):
    """Malformed recipe or input files not matching the expected schema."""


@dataclass
class FigureRecipe:
    panel: str
    inputs: dict[str, Path]
    output: Path
    title: str = ""
    axes: dict = field(default_factory=dict)
    colormap: str = "viridis"

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "FigureRecipe":
        if "panel" not in data or data["panel"] not in PANELS:
            raise RecipeError(
                f"recipe needs a panel out of {PANELS}, got {data.get('panel')!r}")
        if "inputs" not in data or "output" not in data:
            raise RecipeError("recipe needs 'inputs' and 'output'")
        base = Path(base) if base else Path(".")
        raw_inputs = data["inputs"]
        if isinstance(raw_inputs, (list, tuple)):
            raw_inputs = {f"series{i}": p for i, p in enumerate(raw_inputs)}
        inputs = {k: (base / p if not Path(p).is_absolute() else Path(p))
                  for k, p in raw_inputs.items()}
        out = Path(data["output"])
        if not out.is_absolute():
            out = base / out
        return cls(panel=data["panel"], inputs=inputs, output=out,
                   title=data.get("title", ""),
                   axes=data.get("axes", {}),
                   colormap=data.get("colormap", "viridis"))

    @classmethod
    def load(cls, path) -> "FigureRecipe":
        path = Path(path)
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data, base=path.parent)


#: filename-pattern defaults used when rendering everything a manifest lists
_PATTERN_PANELS = (
    ("scan_rates", "rate_scan"),
    ("scan_eps", "epsilon_scan"),
    ("levels", "levels"),
    ("section", "section"),
    ("stability", "stability"),
    ("scatter", "scatter"),
    ("pn_signal", "pn_signal"),
    ("cloud", "cloud"),
    ("trace", "trace"),
)


def recipes_from_manifest(manifest_path, out_dir=None) -> list[FigureRecipe]:
    """One default recipe per CSV listed in a run manifest."""
    manifest_path = Path(manifest_path)
    run_dir = manifest_path.parent
    out_dir = Path(out_dir) if out_dir else run_dir / "figures"
    with open(manifest_path) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    outputs: list[str] = []
    for rec in records:
        outputs.extend(rec.get("outputs", []))
    csvs = [name for name in dict.fromkeys(outputs) if name.endswith(".csv")]
    windows = run_dir / "windows.jsonl"
    recipes = []
    trace_inputs: dict[str, Path] = {}
    for name in csvs:
        panel = next((p for pat, p in _PATTERN_PANELS if pat in name), None)
        if panel is None:
            raise RecipeError(f"no default panel for {name}")
        if panel == "trace":
            trace_inputs[Path(name).stem] = run_dir / name
            continue
        inputs = {"data": run_dir / name}
        if panel == "stability" and windows.exists():
            inputs["windows"] = windows
        recipes.append(FigureRecipe(
            panel=panel, inputs=inputs,
            output=out_dir / (Path(name).stem + ".png")))
    if trace_inputs:
        if windows.exists():
            trace_inputs["windows"] = windows
        recipes.append(FigureRecipe(panel="trace", inputs=trace_inputs,
                                    output=out_dir / "trace.png"))
    return recipes
