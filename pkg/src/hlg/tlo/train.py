"""Training loop for the layout network on labeled synthetic scenes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..scene import DEFAULT_CATEGORIES
from .losses import LayoutModel
from .network import (
    TloParams,
    build_graph_input,
    candidate_parents,
    encode,
    encode_backward,
    feature_dim,
    ownership_backward,
    ownership_logits,
    pose_backward,
    predict_ownership,
    predict_pose_delta,
)
from .synth import LabeledSample

logger = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 5e-3
    batch_size: int = 8
    seed: int = 0
    d_h: int = 32
    geometric: bool = True
    ownership_edges: bool = True
    beta1: float = 0.9
    beta2: float = 0.999


@dataclass
class CurvePoint:
    epoch: int
    loss: float
    owner: float
    geometric: float


@dataclass
class TrainResult:
    params: TloParams
    curve: list[CurvePoint] = field(default_factory=list)
    best_epoch: int = 0


def sample_objective(
    sample: LabeledSample,
    params: TloParams,
    vocabulary: Sequence[str],
    geometric: bool = True,
    ownership_edges: bool = True,
    grads: TloParams | None = None,
) -> tuple[float, float]:
    """(ownership loss, geometric loss) for one sample; accumulates gradients into ``grads``.

    The geometric part is collision + stability + alignment after adding
    the predicted pose deltas to the coarse poses. Its gradient with
    respect to the deltas comes from central differences and is chained
    into the analytic backward pass.
    """
    scene, tree = sample.scene, sample.tree
    g = build_graph_input(scene, tree, vocabulary, ownership_edges=ownership_edges)
    H, cache = encode(g, params, return_cache=True)
    dH = np.zeros_like(H) if grads is not None else None

    owner = 0.0
    for oid in g.ids:
        cands = candidate_parents(tree, g.ids, oid)
        if len(cands) < 2:
            continue  # a lone candidate has probability 1 and no gradient
        idx = [g.index(c) for c in cands]
        logits, c = ownership_logits(H, g.index(oid), idx, params, return_cache=True)
        z = logits - logits.max()
        p = np.exp(z) / np.exp(z).sum()
        true = cands.index(tree.parent[oid])
        owner -= math.log(max(p[true], 1e-300))
        if dH is not None:
            dlogits = p.copy()
            dlogits[true] -= 1.0
            ownership_backward(dlogits, dH, g.index(oid), idx, c, params, grads)

    geom = 0.0
    if geometric:
        n = len(g.ids)
        D, G = predict_pose_delta(H[:n], params, return_cache=True)
        model = LayoutModel(scene, tree, sample.truth)
        P = [[a + float(b) for a, b in zip(row, drow)] for row, drow in zip(model.pose_matrix(), D)]
        B = model.boxes(P)
        geom = model.total(P, B)
        if dH is not None:
            dD = np.array([model.gradient(P, k, B) for k in range(n)])
            dH[:n] += pose_backward(dD, H[:n], G, params, grads)

    if dH is not None:
        encode_backward(dH, cache, params, grads)
    return owner, geom


def dataset_loss(samples, params, vocabulary, cfg: TrainConfig) -> tuple[float, float]:
    o = g = 0.0
    for s in samples:
        so, sg = sample_objective(s, params, vocabulary, cfg.geometric, cfg.ownership_edges)
        o += so
        g += sg
    return o / len(samples), g / len(samples)


def train(
    samples: Sequence[LabeledSample],
    config: TrainConfig | None = None,
    vocabulary: Sequence[str] = DEFAULT_CATEGORIES,
) -> TrainResult:
    """Adam on minibatches of the composite loss.

    The loss over the full dataset is evaluated after every epoch; the
    parameters with the lowest value (initialization included) are returned.
    """
    cfg = config or TrainConfig()
    if not samples:
        raise EmptyDataset("training needs at least one sample")
    params = TloParams.init(feature_dim(vocabulary), cfg.d_h, cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    o, g = dataset_loss(samples, params, vocabulary, cfg)
    curve = [CurvePoint(0, o + g, o, g)]
    best, best_loss, best_epoch = params.copy(), o + g, 0
    m = [np.zeros_like(a) for a in params.arrays()]
    v = [np.zeros_like(a) for a in params.arrays()]
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(samples))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads = TloParams.zeros_like(params)
            for k in batch:
                sample_objective(samples[int(k)], params, vocabulary, cfg.geometric, cfg.ownership_edges, grads)
            step += 1
            for i, (p, gr) in enumerate(zip(params.arrays(), grads.arrays())):
                gr = gr / len(batch)
                m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * gr
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gr * gr
                mhat = m[i] / (1 - cfg.beta1 ** step)
                vhat = v[i] / (1 - cfg.beta2 ** step)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + 1e-8)
        o, g = dataset_loss(samples, params, vocabulary, cfg)
        curve.append(CurvePoint(epoch, o + g, o, g))
        logger.info("epoch %d loss %.6f (owner %.6f, geometric %.6f)", epoch, o + g, o, g)
        if o + g < best_loss:
            best, best_loss, best_epoch = params.copy(), o + g, epoch
    return TrainResult(best, curve, best_epoch)


def ownership_accuracy(
    samples: Sequence[LabeledSample],
    params: TloParams,
    vocabulary: Sequence[str] = DEFAULT_CATEGORIES,
    ownership_edges: bool = True,
) -> float:
    """Share of children with more than one candidate whose most likely parent is the true one."""
    hits = total = 0
    for s in samples:
        g = build_graph_input(s.scene, s.tree, vocabulary, ownership_edges=ownership_edges)
        H = encode(g, params)
        for oid in g.ids:
            cands = candidate_parents(s.tree, g.ids, oid)
            if len(cands) < 2:
                continue
            p = predict_ownership(H, g.index(oid), [g.index(c) for c in cands], params)
            hits += int(cands[int(np.argmax(p))] == s.tree.parent[oid])
            total += 1
    return hits / total if total else 1.0
