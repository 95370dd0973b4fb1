"""Projected gradient descent on object poses."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

from ..fgla import OwnershipTree
from ..scene import Pose, Scene
from .losses import H_POS, H_YAW, LayoutModel, LossBreakdown

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefineConfig:
    step: float = 0.05
    max_iters: int = 500
    tol: float = 1e-8
    window: int = 10
    max_halvings: int = 30
    h_pos: float = H_POS
    h_yaw: float = H_YAW
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass
class RefineResult:
    scene: Scene
    trace: list[LossBreakdown] = field(default_factory=list)
    accepted: int = 0
    iterations: int = 0


def refine(
    scene: Scene,
    tree: OwnershipTree | None = None,
    targets: Mapping[str, Pose] | None = None,
    config: RefineConfig | None = None,
) -> RefineResult:
    """Minimize collision + stability + alignment over all poses.

    Each iteration takes a finite-difference gradient of every object's
    (x, y, yaw), steps with backtracking (the step is halved until the total
    strictly drops) and re-snaps z so that children rest on their parents.
    z itself is never a free variable: the snap is the projection, so its
    gradient is not computed. The trace starts with the initial loss and
    gains one entry per accepted step.
    """
    cfg = config or RefineConfig()
    model = LayoutModel(scene, tree, targets, cfg.weights)
    P = model.pose_matrix()
    model.snap(P)
    start_snapped = P != model.pose_matrix()
    current = model.total(P)
    trace = [model.breakdown(P)]
    history = [current]
    accepted = 0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if current <= 0.0:
            break
        B = model.boxes(P)
        grads = [model.gradient(P, k, B, (0, 1, 3), cfg.h_pos, cfg.h_yaw) for k in range(model.n)]
        if not any(any(g) for g in grads):
            break
        alpha = cfg.step
        for _ in range(cfg.max_halvings + 1):
            trial = [
                [row[0] - alpha * g[0], row[1] - alpha * g[1], row[2], row[3] - alpha * g[3]]
                for row, g in zip(P, grads)
            ]
            model.snap(trial)
            value = model.total(trial)
            if value < current:
                break
            alpha *= 0.5
        else:
            logger.debug("refine: no descent step after %d halvings at iter %d", cfg.max_halvings, it)
            break
        P, current = trial, value
        accepted += 1
        trace.append(model.breakdown(P))
        history.append(current)
        if len(history) > cfg.window and history[-cfg.window - 1] - current < cfg.tol:
            break

    if accepted == 0 and not start_snapped:
        out = scene
    else:
        out = scene.with_poses(model.to_poses(P))
    return RefineResult(out, trace, accepted, it)
