"""Declarative figure rendering for bhcsweep CSV outputs."""

__version__ = "0.1.0"

from .recipes import FigureRecipe, RecipeError, recipes_from_manifest
from .render import render
