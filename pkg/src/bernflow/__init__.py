"""Bernstein-polynomial normalizing flows with exact belief propagation."""

from .bernstein import BernsteinTensor, Box
from .flow import ConditionalFlowModel, FlowModel
from .propagation import Belief, ConditionalTensor, propagate, propagate_step
from .systems import Dataset, SystemSpec
from .training import TrainConfig, fit_initial, fit_transition, train_relaxed
from .transform import DiagonalTransform, moment_match

__version__ = "0.1.0"

__all__ = [
    "Belief",
    "BernsteinTensor",
    "Box",
    "ConditionalFlowModel",
    "ConditionalTensor",
    "Dataset",
    "DiagonalTransform",
    "FlowModel",
    "SystemSpec",
    "TrainConfig",
    "fit_initial",
    "fit_transition",
    "moment_match",
    "propagate",
    "propagate_step",
    "train_relaxed",
]
