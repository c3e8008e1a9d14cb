"""Interval abstract interpretation and interval universal approximation for small networks."""

from .errors import IuaError
from .interval import Interval, IntervalBox, abstract_eval, abstract_eval_batch, alpha
from .iua_builder import IuaBlueprint, TargetFunction, build_iua
from .nn_expr import ActivationProfile, ExprGraph, GraphBuilder, eval, eval_batch, make_squashable

__all__ = [
    "ActivationProfile",
    "ExprGraph",
    "GraphBuilder",
    "Interval",
    "IntervalBox",
    "IuaBlueprint",
    "IuaError",
    "TargetFunction",
    "abstract_eval",
    "abstract_eval_batch",
    "alpha",
    "build_iua",
    "eval",
    "eval_batch",
    "make_squashable",
]
