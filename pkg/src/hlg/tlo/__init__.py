"""Transformer-style layout optimizer: losses, refinement, network and training."""

from .losses import LayoutModel, LossBreakdown, loss_align, loss_collision, loss_owner, loss_stability, loss_total
from .refine import RefineConfig, RefineResult, refine

__all__ = [
    "LayoutModel",
    "LossBreakdown",
    "RefineConfig",
    "RefineResult",
    "loss_align",
    "loss_collision",
    "loss_owner",
    "loss_stability",
    "loss_total",
    "refine",
]
