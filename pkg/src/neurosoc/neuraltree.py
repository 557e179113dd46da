"""Probabilistic oblique decision tree with energy-aware training.

Nodes are stored in heap order: internal nodes 0..I-1, node i has children
2i+1 (left) and 2i+2 (right), leaves are nodes I..2I. A node sends a sample
right with probability sigmoid(w.x + b); greedy inference takes the right
branch when the MAC is >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .signal import MAX_FEATURES, FeatureKind, FeatureSpec

WEIGHT_BITS = 12
PHI_SCALE = (1 << WEIGHT_BITS) - 1
MAX_CLASSES = 8
COLLAPSE_VISIT = 1e-3

DEFAULT_BETA = {
    FeatureKind.LMP: 0.05,
    FeatureKind.ACT: 0.06,
    FeatureKind.LL: 0.08,
    FeatureKind.MOB: 0.12,
    FeatureKind.COM: 0.15,
    FeatureKind.SE: 0.5,
    FeatureKind.HFO_RATIO: 0.9,
    FeatureKind.PLV: 1.0,
    FeatureKind.PAC: 1.0,
}


@dataclass(frozen=True)
class EnergyTable:
    """Normalised power cost per feature kind (max entry exactly 1)."""

    beta: dict

    def __post_init__(self):
        beta = {FeatureKind(k) if isinstance(k, str) else k: float(v) for k, v in self.beta.items()}
        if not beta:
            raise ValueError("empty energy table")
        if any(v <= 0 or v > 1 for v in beta.values()):
            raise ValueError("costs must lie in (0, 1]")
        if not math.isclose(max(beta.values()), 1.0):
            raise ValueError("costs must be normalised so the largest is 1")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def default(cls) -> "EnergyTable":
        return cls(dict(DEFAULT_BETA))

    def cost(self, kind: FeatureKind) -> float:
        try:
            return self.beta[kind]
        except KeyError:
            raise KeyError(f"no energy cost for feature kind {kind.value}") from None

    def vector(self, specs: Sequence[FeatureSpec]) -> np.ndarray:
        return np.array([self.cost(s.kind) for s in specs], dtype=float)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 64
    C: float = 0.0
    prune_threshold: float = 0.0
    seed: int = 0
    depth: int = 4
    init_scale: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.C < 0:
            raise ValueError("C must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")


@dataclass(frozen=True)
class QuantInfo:
    """Integer image of a quantised model."""

    weight_frac: np.ndarray   # (I,) fraction bits of each node's weights
    bias_frac: np.ndarray     # (I,)
    weights: np.ndarray       # (I, D) 12-bit signed raw
    bias: np.ndarray          # (I,) 12-bit signed raw
    phi: np.ndarray           # (L, K) 12-bit unsigned raw, rows sum to 4095


@dataclass(frozen=True, eq=False)
class NeuralTreeModel:
    depth: int
    n_classes: int
    feature_specs: tuple[FeatureSpec, ...]
    weights: np.ndarray                    # (I, D)
    bias: np.ndarray                       # (I,)
    leaf_probs: np.ndarray                 # (L, K)
    x_mean: np.ndarray | None = None       # standardisation, None for raw space
    x_scale: np.ndarray | None = None
    active: np.ndarray | None = None       # (I, D) bool, features each node extracts
    collapsed: np.ndarray | None = None    # (I,) bool
    quant: QuantInfo | None = None

    def __post_init__(self):
        I, L = self.n_internal, self.n_leaves
        D = len(self.feature_specs)
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if not 2 <= self.n_classes <= MAX_CLASSES:
            raise ValueError(f"between 2 and {MAX_CLASSES} classes supported")
        w = np.asarray(self.weights, dtype=float).reshape(I, D)
        b = np.asarray(self.bias, dtype=float).reshape(I)
        phi = np.asarray(self.leaf_probs, dtype=float)
        if phi.shape != (L, self.n_classes):
            raise ValueError(f"leaf table must be {L}x{self.n_classes}")
        if np.any(phi < 0) or np.any(np.abs(phi.sum(axis=1) - 1) > 1e-9):
            raise ValueError("leaf distributions must be probability vectors")
        active = np.ones((I, D), bool) if self.active is None else np.asarray(self.active, bool)
        collapsed = np.zeros(I, bool) if self.collapsed is None else np.asarray(self.collapsed, bool)
        mean = np.zeros(D) if self.x_mean is None else np.asarray(self.x_mean, float)
        scale = np.ones(D) if self.x_scale is None else np.asarray(self.x_scale, float)
        for name, v in (("weights", w), ("bias", b), ("leaf_probs", phi), ("active", active),
                        ("collapsed", collapsed), ("x_mean", mean), ("x_scale", scale)):
            v = v.copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def n_internal(self) -> int:
        return (1 << self.depth) - 1

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    @property
    def n_features(self) -> int:
        return len(self.feature_specs)

    def effective_weights(self) -> np.ndarray:
        return np.where(self.active, self.weights, 0.0)

    def node_features(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.active[i] & (self.weights[i] != 0))]

    def node_specs(self, i: int) -> list[FeatureSpec]:
        return [self.feature_specs[j] for j in self.node_features(i)]

    def standardise(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return (X - self.x_mean) / self.x_scale

    def leaf_labels(self) -> np.ndarray:
        if self.quant is not None:
            return np.argmax(self.quant.phi, axis=1)
        return np.argmax(self.leaf_probs, axis=1)

    def with_(self, **kw) -> "NeuralTreeModel":
        return replace(self, **kw)


def sigmoid(m):
    m = np.asarray(m, dtype=float)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def margins(model: NeuralTreeModel, X) -> np.ndarray:
    Z = model.standardise(X)
    return Z @ model.effective_weights().T + model.bias


def _visit(s: np.ndarray) -> np.ndarray:
    """Top-down path products for every node; s is (B, I) right-probabilities."""
    B, I = s.shape
    mu = np.empty((B, 2 * I + 1))
    mu[:, 0] = 1.0
    for i in range(I):
        mu[:, 2 * i + 1] = mu[:, i] * (1.0 - s[:, i])
        mu[:, 2 * i + 2] = mu[:, i] * s[:, i]
    return mu


def route_probabilities(x, model: NeuralTreeModel) -> np.ndarray:
    """p(leaf | x), shape (L,) for one vector or (B, L) for a batch."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    mu = _visit(sigmoid(margins(model, X)))
    p = mu[:, model.n_internal:]
    return p[0] if single else p


def node_visit_probabilities(X, model: NeuralTreeModel) -> np.ndarray:
    """(B, I) probability of reaching each internal node."""
    return _visit(sigmoid(margins(model, X)))[:, :model.n_internal]


def predict_proba(x, model: NeuralTreeModel) -> np.ndarray:
    return route_probabilities(x, model) @ model.leaf_probs


def energy_regularizer(model: NeuralTreeModel, X, energy: EnergyTable) -> float:
    """sum_i pbar_i sum_j beta_j |theta_ij| with pbar_i the batch-mean visit probability."""
    beta = energy.vector(model.feature_specs)
    pbar = node_visit_probabilities(X, model).mean(axis=0)
    return float(pbar @ (np.abs(model.effective_weights()) @ beta))


# ---------------------------------------------------------------- training

@dataclass
class TreeParams:
    W: np.ndarray        # (I, D), standardised feature space
    b: np.ndarray        # (I,)
    logits: np.ndarray   # (L, K)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b, self.logits.ravel()])

    def unflat(self, v: np.ndarray) -> "TreeParams":
        nW, nb = self.W.size, self.b.size
        return TreeParams(v[:nW].reshape(self.W.shape), v[nW:nW + nb].copy(),
                          v[nW + nb:].reshape(self.logits.shape))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(params: TreeParams, Z: np.ndarray, y: np.ndarray, C: float,
                  beta: np.ndarray, mask: np.ndarray | None = None):
    """Mean cross-entropy + C * energy term, and its analytic gradient."""
    W = params.W if mask is None else params.W * mask
    B = Z.shape[0]
    I = W.shape[0]
    phi = softmax(params.logits)
    s = sigmoid(Z @ W.T + params.b)
    mu = _visit(s)
    p = mu[:, I:]                                   # (B, L)
    phi_y = phi[:, y].T                             # (B, L)
    A = np.zeros_like(mu)
    A[:, I:] = p * phi_y
    P = A[:, I:].sum(axis=1)
    E = np.abs(W) @ beta                            # (I,)
    T = np.zeros_like(mu)
    for i in range(I - 1, -1, -1):
        l, r = 2 * i + 1, 2 * i + 2
        A[:, i] = A[:, l] + A[:, r]
        T[:, i] = mu[:, i] * E[i] + T[:, l] + T[:, r]
    pbar = mu[:, :I].mean(axis=0)
    loss = -np.mean(np.log(P)) + C * float(pbar @ E)

    gm = np.empty((B, I))
    for i in range(I):
        l, r = 2 * i + 1, 2 * i + 2
        si = s[:, i]
        dP = (1 - si) * A[:, r] - si * A[:, l]
        dT = (1 - si) * T[:, r] - si * T[:, l]
        gm[:, i] = -dP / P + C * dT
    gm /= B
    gW = gm.T @ Z + C * pbar[:, None] * beta[None, :] * np.sign(W)
    if mask is not None:
        gW = gW * mask
    gb = gm.sum(axis=0)
    resp = A[:, I:] / P[:, None]                   # (B, L) posterior leaf responsibility
    onehot = np.zeros((B, phi.shape[1]))
    onehot[np.arange(B), y] = 1.0
    glog = -(resp.T @ onehot - resp.sum(axis=0)[:, None] * phi) / B
    return loss, TreeParams(gW, gb, glog)


class Adam:
    def __init__(self, lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainResult:
    model: NeuralTreeModel
    loss_history: list[float] = field(default_factory=list)


def _check_data(X, y, specs):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("empty dataset")
    if len(y) != len(X):
        raise ValueError("labels and features differ in length")
    if X.shape[1] != len(specs):
        raise ValueError("one FeatureSpec per feature column is required")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    if len(np.unique(y)) < 2:
        raise ValueError("training needs at least two classes")
    return X, y.astype(np.int64)


def train(X, y, specs: Sequence[FeatureSpec], config: TrainConfig = TrainConfig(),
          energy: EnergyTable | None = None, n_classes: int | None = None) -> TrainResult:
    """Fit a depth-``config.depth`` tree by Adam on mean CE + C * energy term."""
    specs = tuple(specs)
    X, y = _check_data(X, y, specs)
    energy = energy or EnergyTable.default()
    beta = energy.vector(specs)
    K = int(n_classes or y.max() + 1)
    if y.min() < 0 or y.max() >= K:
        raise ValueError("labels must lie in [0, n_classes)")
    rng = np.random.default_rng(config.seed)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    I, L, D = (1 << config.depth) - 1, 1 << config.depth, X.shape[1]
    params = TreeParams(rng.normal(0, config.init_scale, (I, D)), np.zeros(I),
                        rng.normal(0, config.init_scale, (L, K)))
    opt = Adam(config.learning_rate)
    theta = params.flat()
    n = len(Z)
    history = [loss_and_grad(params, Z, y, config.C, beta)[0]]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for k in range(0, n, config.batch_size):
            idx = order[k:k + config.batch_size]
            _, g = loss_and_grad(params.unflat(theta), Z[idx], y[idx], config.C, beta)
            theta = opt.step(theta, g.flat())
        history.append(loss_and_grad(params.unflat(theta), Z, y, config.C, beta)[0])
    params = params.unflat(theta)
    model = NeuralTreeModel(config.depth, K, specs, params.W, params.b, softmax(params.logits),
                            x_mean=mean, x_scale=scale)
    if config.prune_threshold > 0:
        model = prune(model, config.prune_threshold, X)
    return TrainResult(model, history)


def objective(model: NeuralTreeModel, X, y, C: float, energy: EnergyTable) -> float:
    """Training objective of a model evaluated on (X, y)."""
    P = predict_proba(X, model)[np.arange(len(y)), np.asarray(y)]
    return float(-np.mean(np.log(P)) + C * energy_regularizer(model, X, energy))


# ---------------------------------------------------------------- pruning

def _subtree(i: int, I: int) -> tuple[list[int], list[int]]:
    """Internal nodes and leaf indices below (and including) internal node i."""
    nodes, leaves, stack = [], [], [i]
    while stack:
        n = stack.pop()
        if n < I:
            nodes.append(n)
            stack += [2 * n + 1, 2 * n + 2]
        else:
            leaves.append(n - I)
    return sorted(nodes), sorted(leaves)


def prune(model: NeuralTreeModel, threshold: float, X=None,
          max_features: int = MAX_FEATURES, min_visit: float = COLLAPSE_VISIT) -> NeuralTreeModel:
    """Zero small weights, cap features per node, collapse rarely visited subtrees.

    ``threshold`` applies to the stored weights (standardised space for a
    trained model). Collapsing needs the training features ``X``.
    """
    W = model.effective_weights().copy()
    W[np.abs(W) < threshold] = 0.0
    for i in range(model.n_internal):
        nz = np.flatnonzero(W[i])
        if len(nz) > max_features:
            keep = nz[np.argsort(-np.abs(W[i, nz]), kind="stable")[:max_features]]
            drop = np.setdiff1d(nz, keep)
            W[i, drop] = 0.0
    b = model.bias.copy()
    phi = model.leaf_probs.copy()
    collapsed = model.collapsed.copy()
    pruned = model.with_(weights=W, active=W != 0, bias=b, leaf_probs=phi, collapsed=collapsed)
    if X is None or threshold == 0:
        return pruned
    I = model.n_internal
    mu = _visit(sigmoid(margins(pruned, X))).mean(axis=0)
    for i in range(1, I):
        if collapsed[i] or mu[i] >= min_visit:
            continue
        nodes, leaves = _subtree(i, I)
        weights = mu[I + np.array(leaves)]
        mix = (weights @ phi[leaves] / weights.sum()) if weights.sum() > 0 else phi[leaves].mean(axis=0)
        phi[leaves] = mix / mix.sum()
        W[nodes] = 0.0
        b[nodes] = 0.0
        collapsed[nodes] = True
    return model.with_(weights=W, active=W != 0, bias=b, leaf_probs=phi, collapsed=collapsed)


def feature_count(model: NeuralTreeModel) -> int:
    """Number of (node, feature) pairs a full traversal could extract."""
    return int(sum(len(model.node_features(i)) for i in range(model.n_internal)))


# ---------------------------------------------------------------- quantisation

def _frac_for(max_abs: float) -> int:
    """Largest fraction-bit count that keeps round(max_abs * 2^f) within 12 signed bits."""
    if max_abs == 0:
        return 0
    top = (1 << (WEIGHT_BITS - 1)) - 1
    f = int(math.floor(math.log2(top / max_abs)))
    while round(max_abs * 2.0 ** (f + 1)) <= top:
        f += 1
    while round(max_abs * 2.0 ** f) > top:
        f -= 1
    return f


def _q12(v: np.ndarray, f: int) -> np.ndarray:
    top = (1 << (WEIGHT_BITS - 1)) - 1
    raw = np.sign(v) * np.floor(np.abs(v) * 2.0 ** f + 0.5)
    return np.clip(raw, -top - 1, top).astype(np.int64)


def quantize_phi(phi: np.ndarray) -> np.ndarray:
    """12-bit leaf table whose rows sum to 4095 (largest-remainder rounding)."""
    v = np.asarray(phi, dtype=float) * PHI_SCALE
    base = np.floor(v + 1e-9).astype(np.int64)
    out = base.copy()
    for r in range(len(v)):
        deficit = PHI_SCALE - int(base[r].sum())
        if deficit > 0:
            order = np.argsort(-(v[r] - base[r]), kind="stable")[:deficit]
            out[r, order] += 1
    return out


def fold_standardisation(model: NeuralTreeModel) -> tuple[np.ndarray, np.ndarray]:
    """Weights and biases acting directly on raw feature values."""
    W = model.effective_weights() / model.x_scale
    b = model.bias - W @ model.x_mean
    return W, b


def quantize(model: NeuralTreeModel) -> NeuralTreeModel:
    """12-bit weights (per-node scaling), 12-bit biases, 12-bit leaf tables."""
    W, b = fold_standardisation(model)
    I = model.n_internal
    wf = np.array([_frac_for(float(np.abs(W[i]).max(initial=0.0))) for i in range(I)])
    bf = np.array([_frac_for(abs(float(b[i]))) for i in range(I)])
    wr = np.stack([_q12(W[i], int(wf[i])) for i in range(I)])
    br = np.array([int(_q12(np.array([b[i]]), int(bf[i]))[0]) for i in range(I)])
    phr = quantize_phi(model.leaf_probs)
    Wq = wr * 2.0 ** -wf[:, None].astype(float)
    bq = br * 2.0 ** -bf.astype(float)
    return NeuralTreeModel(model.depth, model.n_classes, model.feature_specs, Wq, bq,
                           phr / PHI_SCALE, active=wr != 0, collapsed=model.collapsed,
                           quant=QuantInfo(wf, bf, wr, br, phr))


# ---------------------------------------------------------------- greedy inference

def greedy_leaves(model: NeuralTreeModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Float greedy descent. Returns leaf index per row and (B, depth) visited nodes."""
    m = margins(model, X)
    B = m.shape[0]
    node = np.zeros(B, dtype=np.int64)
    path = np.empty((B, model.depth), dtype=np.int64)
    for d in range(model.depth):
        path[:, d] = node
        right = m[np.arange(B), node] >= 0
        node = 2 * node + 1 + right
    return node - model.n_internal, path


def greedy_predict(model: NeuralTreeModel, X) -> np.ndarray:
    leaf, _ = greedy_leaves(model, X)
    return model.leaf_labels()[leaf]


def mac_raw(model: NeuralTreeModel, i: int, x_raw: Sequence[int], feat_frac: int = 16) -> int:
    """Fixed-point node MAC on Q.feat_frac feature words; sign decides the branch."""
    q = model.quant
    if q is None:
        raise ValueError("model is not quantised")
    feats = model.node_features(i)
    if len(x_raw) != len(feats):
        raise ValueError(f"node {i} expects {len(feats)} features, got {len(x_raw)}")
    acc = sum(int(q.weights[i, j]) * int(v) for j, v in zip(feats, x_raw))
    shift = feat_frac + int(q.weight_frac[i]) - int(q.bias_frac[i])
    bias = int(q.bias[i])
    acc += bias << shift if shift >= 0 else _rshift_round(bias, -shift)
    return acc


def _rshift_round(v: int, n: int) -> int:
    mag = (abs(v) + (1 << (n - 1))) >> n
    return -mag if v < 0 else mag


def fixed_predict(model: NeuralTreeModel, X_raw) -> tuple[np.ndarray, np.ndarray]:
    """Greedy descent using the integer MAC on Q16.16 feature words (B, D)."""
    X_raw = np.asarray(X_raw, dtype=np.int64)
    leaves = np.empty(len(X_raw), dtype=np.int64)
    for b, row in enumerate(X_raw):
        node = 0
        while node < model.n_internal:
            feats = model.node_features(node)
            acc = mac_raw(model, node, [row[j] for j in feats])
            node = 2 * node + 1 + (acc >= 0)
        leaves[b] = node - model.n_internal
    return model.leaf_labels()[leaves], leaves


def energy_score(model: NeuralTreeModel, X, energy: EnergyTable) -> float:
    """Mean over rows of the summed cost of features extracted on the greedy path."""
    beta = energy.vector(model.feature_specs)
    per_node = np.array([beta[model.node_features(i)].sum() for i in range(model.n_internal)])
    _, path = greedy_leaves(model, X)
    return float(per_node[path].sum(axis=1).mean())


# ---------------------------------------------------------------- reference enumeration

def enumerate_leaf_probabilities(x, model: NeuralTreeModel) -> np.ndarray:
    """Per-leaf path products computed leaf by leaf (reference implementation)."""
    s = sigmoid(margins(model, x))[0]
    out = np.empty(model.n_leaves)
    for leaf in range(model.n_leaves):
        node = leaf + model.n_internal
        p = 1.0
        while node:
            parent = (node - 1) // 2
            p *= s[parent] if node == 2 * parent + 2 else 1.0 - s[parent]
            node = parent
        out[leaf] = p
    return out
