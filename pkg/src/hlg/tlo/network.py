"""Single-layer graph attention encoder with ownership and pose-delta heads.

Forward and backward passes are written out by hand in numpy. Graphs are
tiny (a room rarely holds more than a few dozen objects), so attention is
computed densely with a neighbor mask.

The graph holds one node per object plus a virtual floor node (last
index). Edges are the layer-graph relations, the ownership edges and
self-loops, all treated as undirected.
"""

from __future__ import annotations

import hashlib
import io
import math
import struct
from dataclasses import dataclass, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..fgla import OwnershipTree
from ..scene import FLOOR, Pose, Scene

MLP_HIDDEN = 32
LEAKY_SLOPE = 0.2
MAGIC = b"TLOP"
VERSION = 1


class ShapeMismatch(ValueError):
    pass


def vocab_hash(vocabulary: Sequence[str]) -> int:
    digest = hashlib.sha256("\n".join(vocabulary).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class TloParams:
    W: np.ndarray  # (d_in, d_h)
    a: np.ndarray  # (2 d_h,)
    own_W1: np.ndarray  # (2 d_h, 32)
    own_b1: np.ndarray  # (32,)
    own_W2: np.ndarray  # (32, 1)
    own_b2: np.ndarray  # (1,)
    pose_W1: np.ndarray  # (d_h, 32)
    pose_b1: np.ndarray  # (32,)
    pose_W2: np.ndarray  # (32, 4)
    pose_b2: np.ndarray  # (4,)

    @property
    def d_in(self) -> int:
        return self.W.shape[0]

    @property
    def d_h(self) -> int:
        return self.W.shape[1]

    @classmethod
    def shapes(cls, d_in: int, d_h: int) -> dict[str, tuple[int, ...]]:
        return {
            "W": (d_in, d_h),
            "a": (2 * d_h,),
            "own_W1": (2 * d_h, MLP_HIDDEN),
            "own_b1": (MLP_HIDDEN,),
            "own_W2": (MLP_HIDDEN, 1),
            "own_b2": (1,),
            "pose_W1": (d_h, MLP_HIDDEN),
            "pose_b1": (MLP_HIDDEN,),
            "pose_W2": (MLP_HIDDEN, 4),
            "pose_b2": (4,),
        }

    @classmethod
    def init(cls, d_in: int, d_h: int = 32, seed: int = 0) -> "TloParams":
        """Uniform(-s, s) with s = 1/sqrt(fan_in); biases use their layer's fan-in."""
        rng = np.random.default_rng(seed)
        fan_in = {
            "W": d_in, "a": 2 * d_h,
            "own_W1": 2 * d_h, "own_b1": 2 * d_h, "own_W2": MLP_HIDDEN, "own_b2": MLP_HIDDEN,
            "pose_W1": d_h, "pose_b1": d_h, "pose_W2": MLP_HIDDEN, "pose_b2": MLP_HIDDEN,
        }
        arrays = {}
        for name, shape in cls.shapes(d_in, d_h).items():
            s = 1.0 / math.sqrt(fan_in[name])
            arrays[name] = rng.uniform(-s, s, size=shape)
        return cls(**arrays)

    @classmethod
    def zeros_like(cls, other: "TloParams") -> "TloParams":
        return cls(**{f.name: np.zeros_like(getattr(other, f.name)) for f in fields(cls)})

    def names(self) -> list[str]:
        return [f.name for f in fields(self)]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in self.names()]

    def copy(self) -> "TloParams":
        return TloParams(**{n: getattr(self, n).copy() for n in self.names()})

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec: np.ndarray) -> None:
        k = 0
        for a in self.arrays():
            a.ravel()[:] = vec[k:k + a.size]
            k += a.size


# ---------------------------------------------------------------------- features


@dataclass
class GraphInput:
    ids: list[str]  # object ids; the floor node is index len(ids)
    features: np.ndarray  # (n + 1, d_in)
    mask: np.ndarray  # (n + 1, n + 1) bool neighbor mask incl. self-loops

    @property
    def floor_index(self) -> int:
        return len(self.ids)

    def index(self, oid: str) -> int:
        return self.floor_index if oid == FLOOR else self.ids.index(oid)


def feature_dim(vocabulary: Sequence[str]) -> int:
    return len(vocabulary) + 9


def build_graph_input(
    scene: Scene,
    tree: OwnershipTree,
    vocabulary: Sequence[str],
    poses: Mapping | None = None,
    ownership_edges: bool = True,
) -> GraphInput:
    """Node features: one-hot category | dims | normalized position | sin, cos yaw | depth."""
    poses = scene.poses if poses is None else poses
    ids = [o.id for o in scene.objects]
    n = len(ids)
    V = len(vocabulary)
    cat_index = {c: k for k, c in enumerate(vocabulary)}
    xs = [p[0] for p in scene.shell.floor_polygon]
    ys = [p[1] for p in scene.shell.floor_polygon]
    x0, y0 = min(xs), min(ys)
    diag = math.hypot(max(xs) - x0, max(ys) - y0)

    F = np.zeros((n + 1, V + 9))
    for k, o in enumerate(scene.objects):
        if o.category not in cat_index:
            raise ShapeMismatch(f"category {o.category!r} is not in the model vocabulary")
        p = poses[o.id]
        F[k, cat_index[o.category]] = 1.0
        F[k, V:V + 3] = o.dims
        F[k, V + 3:V + 6] = ((p.position[0] - x0) / diag, (p.position[1] - y0) / diag, p.position[2] / diag)
        F[k, V + 6:V + 8] = (math.sin(p.yaw), math.cos(p.yaw))
        F[k, V + 8] = tree.depth[o.id]
    cx, cy = (sum(xs) / len(xs) - x0) / diag, (sum(ys) / len(ys) - y0) / diag
    F[n, V:V + 3] = (max(xs) - x0, max(ys) - y0, 0.0)
    F[n, V + 3:V + 6] = (cx, cy, 0.0)
    F[n, V + 6:V + 8] = (0.0, 1.0)
    F[n, V + 8] = -1.0

    index = {oid: k for k, oid in enumerate(ids)}
    index[FLOOR] = n
    mask = np.eye(n + 1, dtype=bool)
    for c in scene.constraints:
        if c.relation.value == "on":
            continue
        i, j = index[c.subject], index[c.reference]
        mask[i, j] = mask[j, i] = True
    if ownership_edges:
        for oid in ids:
            i, j = index[oid], index[tree.parent[oid]]
            mask[i, j] = mask[j, i] = True
    return GraphInput(ids, F, mask)


# ---------------------------------------------------------------------- forward


def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


@dataclass
class EncodeCache:
    F: np.ndarray
    Z: np.ndarray
    pre: np.ndarray
    alpha: np.ndarray
    m: np.ndarray
    H: np.ndarray
    mask: np.ndarray


def encode(graph: GraphInput, params: TloParams, return_cache: bool = False):
    """h_i = ELU(sum_j alpha_ij W f_j) with alpha = softmax_j LeakyReLU(a . [W f_i || W f_j])."""
    F = graph.features
    if F.shape[1] != params.d_in:
        raise ShapeMismatch(f"features have width {F.shape[1]}, parameters expect {params.d_in}")
    d_h = params.d_h
    Z = F @ params.W
    s = Z @ params.a[:d_h]
    t = Z @ params.a[d_h:]
    pre = s[:, None] + t[None, :]
    e = np.where(graph.mask, _leaky(pre), -np.inf)
    e = e - e.max(axis=1, keepdims=True)
    w = np.exp(e)
    alpha = w / w.sum(axis=1, keepdims=True)
    m = alpha @ Z
    H = _elu(m)
    if return_cache:
        return H, EncodeCache(F, Z, pre, alpha, m, H, graph.mask)
    return H


def encode_backward(dH: np.ndarray, cache: EncodeCache, params: TloParams, grads: TloParams) -> None:
    d_h = params.d_h
    a1, a2 = params.a[:d_h], params.a[d_h:]
    dm = dH * np.where(cache.m > 0, 1.0, np.exp(np.minimum(cache.m, 0.0)))
    alpha, Z = cache.alpha, cache.Z
    dZ = alpha.T @ dm
    dalpha = dm @ Z.T
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dpre = np.where(cache.mask, de * np.where(cache.pre > 0, 1.0, LEAKY_SLOPE), 0.0)
    ds = dpre.sum(axis=1)
    dt = dpre.sum(axis=0)
    dZ += np.outer(ds, a1) + np.outer(dt, a2)
    grads.a[:d_h] += Z.T @ ds
    grads.a[d_h:] += Z.T @ dt
    grads.W += cache.F.T @ dZ


def ownership_logits(H: np.ndarray, child: int, candidates: Sequence[int], params: TloParams, return_cache=False):
    X = np.concatenate([np.repeat(H[child][None, :], len(candidates), axis=0), H[list(candidates)]], axis=1)
    G = np.tanh(X @ params.own_W1 + params.own_b1)
    logits = (G @ params.own_W2)[:, 0] + params.own_b2[0]
    if return_cache:
        return logits, (X, G)
    return logits


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def predict_ownership(H: np.ndarray, child: int, candidates: Sequence[int], params: TloParams) -> np.ndarray:
    """Probability over ``candidates`` (node indices) that each is ``child``'s parent."""
    return _softmax(ownership_logits(H, child, candidates, params))


def ownership_backward(dlogits, H_grad, child, candidates, cache, params, grads) -> None:
    X, G = cache
    grads.own_W2 += G.T @ dlogits[:, None]
    grads.own_b2 += dlogits.sum()
    dU = (dlogits[:, None] * params.own_W2[:, 0][None, :]) * (1.0 - G * G)
    grads.own_W1 += X.T @ dU
    grads.own_b1 += dU.sum(axis=0)
    dX = dU @ params.own_W1.T
    d_h = params.d_h
    H_grad[child] += dX[:, :d_h].sum(axis=0)
    np.add.at(H_grad, list(candidates), dX[:, d_h:])


def predict_pose_delta(H: np.ndarray, params: TloParams, return_cache: bool = False):
    """(dx, dy, dz, dyaw) for every node row of ``H``."""
    G = np.tanh(H @ params.pose_W1 + params.pose_b1)
    D = G @ params.pose_W2 + params.pose_b2
    if return_cache:
        return D, G
    return D


def pose_backward(dD: np.ndarray, H: np.ndarray, G: np.ndarray, params: TloParams, grads: TloParams) -> np.ndarray:
    grads.pose_W2 += G.T @ dD
    grads.pose_b2 += dD.sum(axis=0)
    dU = (dD @ params.pose_W2.T) * (1.0 - G * G)
    grads.pose_W1 += H.T @ dU
    grads.pose_b1 += dU.sum(axis=0)
    return dU @ params.pose_W1.T


def apply_pose_deltas(scene: Scene, tree: OwnershipTree, params: TloParams, vocabulary: Sequence[str]) -> Scene:
    """Learned-mode initialization: coarse poses shifted by the predicted deltas."""
    g = build_graph_input(scene, tree, vocabulary)
    D = predict_pose_delta(encode(g, params)[: len(g.ids)], params)
    poses = {}
    for oid, d in zip(g.ids, D):
        p = scene.poses[oid]
        poses[oid] = Pose((p.x + float(d[0]), p.y + float(d[1]), p.z + float(d[2])), p.yaw + float(d[3]))
    return scene.with_poses(poses)


def candidate_parents(tree: OwnershipTree, ids: Sequence[str], child: str) -> list[str]:
    """Objects one level above ``child`` plus the floor."""
    d = tree.depth[child]
    return [oid for oid in ids if tree.depth[oid] == d - 1] + [FLOOR]


# ------------------------------------------------------------------ serialization

_HEADER = struct.Struct("<4sIIIQ")


def save_params(params: TloParams, vocabulary: Sequence[str]) -> bytes:
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, params.d_in, params.d_h, vocab_hash(vocabulary)))
    for a in params.arrays():
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def load_params(data: bytes, vocabulary: Sequence[str] | None = None) -> TloParams:
    if len(data) < _HEADER.size:
        raise ValueError("truncated parameter file")
    magic, version, d_in, d_h, vhash = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError("not a TLOP v1 parameter file")
    if vocabulary is not None and (vhash != vocab_hash(vocabulary) or d_in != feature_dim(vocabulary)):
        raise ShapeMismatch("parameter file was trained with a different category vocabulary")
    shapes = TloParams.shapes(d_in, d_h)
    need = _HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(data) != need:
        raise ValueError(f"parameter file has {len(data)} bytes, expected {need}")
    off = _HEADER.size
    arrays = {}
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        arrays[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    return TloParams(**arrays)


def iter_param_coords(params: TloParams) -> Iterable[tuple[str, tuple[int, ...]]]:
    for name in params.names():
        for idx in np.ndindex(getattr(params, name).shape):
            yield name, idx
