"""plotkit command line: render single recipes or a manifest's full set."""

from __future__ import annotations

import argparse
import sys

from .recipes import FigureRecipe, RecipeError, recipes_from_manifest
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotkit", description="render figures from bhcsweep CSV outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one recipe JSON file")
    p.add_argument("recipe", help="path to a recipe .json")

    p = sub.add_parser("from-manifest",
                       help="render default recipes for every CSV in a manifest")
    p.add_argument("manifest", help="path to runs/<hash>/manifest.jsonl")
    p.add_argument("--out-dir", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "render":
            sidecar = render(FigureRecipe.load(args.recipe))
            print(f"wrote {sidecar['output']} ({sidecar['series']} series)")
        else:
            recipes = recipes_from_manifest(args.manifest, args.out_dir)
            for recipe in recipes:
                sidecar = render(recipe)
                print(f"wrote {sidecar['output']} ({sidecar['series']} series)")
    except RecipeError as exc:
        print(f"recipe error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
