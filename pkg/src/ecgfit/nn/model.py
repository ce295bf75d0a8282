"""Two-branch multi-task GRU model.

A shared GRU trunk feeds two parallel branches, each a GRU followed by a
per-timestep affine unit: a logistic phase classifier (1 = inspiration) and
a linear respiratory-waveform regressor.  Dropout acts on the trunk output
during training only.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .gru import GruCache, GruParams, ShapeError, gru_cell_forward, gru_sequence_backward, gru_sequence_forward, row_dot

BRANCHES = ("cls", "reg")


@dataclass(frozen=True)
class ArchConfig:
    input_dim: int = 3
    shared_hidden: tuple[int, ...] = (10,)
    branch_hidden: int = 10
    dropout: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "shared_hidden", tuple(int(h) for h in self.shared_hidden))
        if self.input_dim < 1 or self.branch_hidden < 1 or any(h < 1 for h in self.shared_hidden):
            raise ValueError("layer sizes must be positive")
        if not self.shared_hidden:
            raise ValueError("at least one shared layer is required")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def trunk_dim(self) -> int:
        return self.shared_hidden[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shared_hidden"] = list(self.shared_hidden)
        return d


def gru_names(arch: ArchConfig) -> list[str]:
    return [f"shared{i}" for i in range(len(arch.shared_hidden))] + list(BRANCHES)


def expected_shapes(arch: ArchConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    dims = [arch.input_dim, *arch.shared_hidden]
    layers = [(f"shared{i}", dims[i], dims[i + 1]) for i in range(len(arch.shared_hidden))]
    layers += [(b, arch.trunk_dim, arch.branch_hidden) for b in BRANCHES]
    for name, d_in, h in layers:
        shapes[f"{name}.W"] = (d_in, 3 * h)
        shapes[f"{name}.U"] = (h, 3 * h)
        shapes[f"{name}.b"] = (3 * h,)
    for b in BRANCHES:
        shapes[f"{b}_head.w"] = (arch.branch_hidden,)
        shapes[f"{b}_head.b"] = (1,)
    return shapes


@dataclass
class MtlModel:
    arch: ArchConfig
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = expected_shapes(self.arch)
        if set(shapes) != set(self.params):
            missing = sorted(set(shapes) - set(self.params))
            extra = sorted(set(self.params) - set(shapes))
            raise ShapeError(f"parameter set mismatch (missing {missing}, unexpected {extra})")
        for name, shape in shapes.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            self.params[name] = arr

    def gru(self, name: str) -> GruParams:
        return GruParams(self.params[f"{name}.W"], self.params[f"{name}.U"], self.params[f"{name}.b"])

    def head(self, branch: str) -> tuple[np.ndarray, float]:
        return self.params[f"{branch}_head.w"], self.params[f"{branch}_head.b"]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "MtlModel":
        return MtlModel(self.arch, {k: v.copy() for k, v in self.params.items()}, copy.deepcopy(self.meta))

    def with_params(self, params: dict[str, np.ndarray]) -> "MtlModel":
        return MtlModel(self.arch, params, copy.deepcopy(self.meta))


def init_model(arch: ArchConfig = ArchConfig(), seed: int = 0) -> MtlModel:
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    dims = [arch.input_dim, *arch.shared_hidden]
    layers = [(f"shared{i}", dims[i], dims[i + 1]) for i in range(len(arch.shared_hidden))]
    layers += [(b, arch.trunk_dim, arch.branch_hidden) for b in BRANCHES]
    for name, d_in, h in layers:
        g = GruParams.init(d_in, h, rng)
        params[f"{name}.W"], params[f"{name}.U"], params[f"{name}.b"] = g.W, g.U, g.b
    lim = np.sqrt(1.0 / arch.branch_hidden)
    for b in BRANCHES:
        params[f"{b}_head.w"] = rng.uniform(-lim, lim, size=arch.branch_hidden)
        params[f"{b}_head.b"] = np.zeros(1)
    return MtlModel(arch, params)


# -- training-mode forward / backward over time-major batches -----------------

@dataclass
class ForwardPass:
    probs: np.ndarray    # (T, B)
    logits: np.ndarray   # (T, B)
    resp: np.ndarray     # (T, B)
    trunk_caches: list[GruCache]
    branch_caches: dict[str, GruCache]
    branch_states: dict[str, np.ndarray]
    mask: Optional[np.ndarray]


def forward_batch(model: MtlModel, X: np.ndarray, dropout: float = 0.0,
                  rng: Optional[np.random.Generator] = None) -> ForwardPass:
    """Forward pass over a time-major (T, B, D) batch, caching for backprop."""
    if X.ndim != 3 or X.shape[2] != model.arch.input_dim:
        raise ShapeError(f"expected (T, B, {model.arch.input_dim}) features, got {X.shape}")
    h = X
    trunk_caches = []
    for i in range(len(model.arch.shared_hidden)):
        h, cache = gru_sequence_forward(h, model.gru(f"shared{i}"))
        trunk_caches.append(cache)
    mask = None
    if dropout > 0:
        if rng is None:
            raise ValueError("dropout needs a random generator")
        mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
        h = h * mask
    caches, states = {}, {}
    for b in BRANCHES:
        states[b], caches[b] = gru_sequence_forward(h, model.gru(b))
    w, c = model.head("cls")
    logits = states["cls"] @ w + c[0]
    w, c = model.head("reg")
    resp = states["reg"] @ w + c[0]
    return ForwardPass(expit(logits), logits, resp, trunk_caches, caches, states, mask)


def mtl_loss(logits, resp_est, labels, resp_true, w_cls: float = 1.0, w_reg: float = 1.0) -> float:
    """``w_cls`` * mean binary cross-entropy + ``w_reg`` * mean squared error.

    Cross-entropy is taken from logits (softplus form) to stay finite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    bce = float(np.mean(np.logaddexp(0.0, logits) - labels * logits))
    mse = float(np.mean((np.asarray(resp_est) - resp_true) ** 2))
    return w_cls * bce + w_reg * mse


def loss_and_grads(model: MtlModel, X, labels, resp_true, w_cls=1.0, w_reg=1.0,
                   dropout=0.0, rng=None) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for a time-major batch (the ``mtl_backward`` step)."""
    fp = forward_batch(model, X, dropout, rng)
    loss = mtl_loss(fp.logits, fp.resp, labels, resp_true, w_cls, w_reg)
    m = fp.logits.size
    d_out = {
        "cls": w_cls * (fp.probs - labels) / m,
        "reg": w_reg * 2.0 * (fp.resp - resp_true) / m,
    }
    grads: dict[str, np.ndarray] = {}
    trunk_out = fp.branch_caches["cls"].X
    d_trunk = np.zeros_like(trunk_out)
    H = model.arch.branch_hidden
    for b in BRANCHES:
        states = fp.branch_states[b]
        d = d_out[b]
        grads[f"{b}_head.w"] = states.reshape(-1, H).T @ d.reshape(-1)
        grads[f"{b}_head.b"] = np.array([d.sum()])
        g = model.gru(b)
        if not np.any(d):
            grads[f"{b}.W"], grads[f"{b}.U"], grads[f"{b}.b"] = (
                np.zeros_like(g.W), np.zeros_like(g.U), np.zeros_like(g.b))
            continue
        w, _ = model.head(b)
        dX, gg = gru_sequence_backward(d[..., None] * w, fp.branch_caches[b], g)
        grads[f"{b}.W"], grads[f"{b}.U"], grads[f"{b}.b"] = gg.W, gg.U, gg.b
        d_trunk += dX
    if fp.mask is not None:
        d_trunk *= fp.mask
    for i in range(len(model.arch.shared_hidden) - 1, -1, -1):
        d_trunk, gg = gru_sequence_backward(d_trunk, fp.trunk_caches[i], model.gru(f"shared{i}"))
        grads[f"shared{i}.W"], grads[f"shared{i}.U"], grads[f"shared{i}.b"] = gg.W, gg.U, gg.b
    return loss, grads


# -- inference: one cell step at a time, shared by batch and streaming paths ----

def _step(model: MtlModel, grus: dict[str, GruParams], x_t, states):
    h = x_t
    new_states = []
    for i in range(len(model.arch.shared_hidden)):
        h = gru_cell_forward(h, states[i], grus[f"shared{i}"])
        new_states.append(h)
    k = len(model.arch.shared_hidden)
    out = []
    for j, b in enumerate(BRANCHES):
        hb = gru_cell_forward(h, states[k + j], grus[b])
        new_states.append(hb)
        w, c = model.head(b)
        out.append(row_dot(hb, w[:, None])[..., 0] + c[0])
    return expit(out[0]), out[1], new_states


def _zero_states(model: MtlModel, batch: int) -> list[np.ndarray]:
    sizes = list(model.arch.shared_hidden) + [model.arch.branch_hidden] * len(BRANCHES)
    return [np.zeros((batch, h)) for h in sizes]


def _grus(model: MtlModel) -> dict[str, GruParams]:
    return {name: model.gru(name) for name in gru_names(model.arch)}


def predict_batch(model: MtlModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inference over a time-major (T, B, D) batch; returns (probs, resp), each (T, B)."""
    if X.ndim != 3 or X.shape[2] != model.arch.input_dim:
        raise ShapeError(f"expected (T, B, {model.arch.input_dim}) features, got {X.shape}")
    T, B, _ = X.shape
    grus = _grus(model)
    states = _zero_states(model, B)
    probs = np.empty((T, B))
    resp = np.empty((T, B))
    for t in range(T):
        probs[t], resp[t], states = _step(model, grus, X[t], states)
    return probs, resp


def mtl_forward(window_features, model: MtlModel, training: bool = False,
                rng: Optional[np.random.Generator] = None, dropout: Optional[float] = None):
    """Per-timestep outputs for one window of (D, T) features.

    Returns ``(phase_probs, resp_estimate)``, both of length T.  With
    ``training`` set, inverted dropout is applied to the trunk output.
    """
    F = np.asarray(window_features, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != model.arch.input_dim:
        raise ShapeError(f"expected ({model.arch.input_dim}, T) features, got {F.shape}")
    X = np.ascontiguousarray(F.T[:, None, :])
    if training:
        rate = model.arch.dropout if dropout is None else dropout
        fp = forward_batch(model, X, rate, rng if rng is not None else np.random.default_rng())
        return fp.probs[:, 0], fp.resp[:, 0]
    probs, resp = predict_batch(model, X)
    return probs[:, 0], resp[:, 0]


class StreamingPredictor:
    """Sample-by-sample inference with hidden state carried between calls."""

    def __init__(self, model: MtlModel):
        self.model = model
        self._grus = _grus(model)
        self.reset()

    def reset(self) -> None:
        self._states = _zero_states(self.model, 1)

    def step(self, x_t) -> tuple[float, float]:
        x = np.ascontiguousarray(x_t, dtype=np.float64).reshape(1, -1)
        p, z, self._states = _step(self.model, self._grus, x, self._states)
        return float(p[0]), float(z[0])

    def run(self, window_features) -> tuple[np.ndarray, np.ndarray]:
        F = np.asarray(window_features, dtype=np.float64)
        out = np.array([self.step(F[:, t]) for t in range(F.shape[1])]).reshape(-1, 2)
        return out[:, 0], out[:, 1]
