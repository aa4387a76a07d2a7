"""Architecture notation: parse, render, elaborate to a layer graph."""
from .graph import ArchGraph, ElabConfig, ElaborationError, InputSpec, LayerDesc, build_encoder, elaborate
from .parser import NIN_MACRO, ArchExpr, ArchSyntaxError, Term, Unit, expand, parse, render

__all__ = [
    "ArchExpr", "ArchGraph", "ArchSyntaxError", "ElabConfig", "ElaborationError", "InputSpec", "LayerDesc",
    "NIN_MACRO", "Term", "Unit", "build_encoder", "elaborate", "expand", "parse", "render",
]
