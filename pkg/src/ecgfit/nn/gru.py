"""Gated recurrent unit: single-step cell, sequence forward pass and BPTT.

Gate columns in ``W``, ``U`` and ``b`` are ordered [update | reset | candidate]:

    z  = sigmoid(x W_z + h U_z + b_z)
    r  = sigmoid(x W_r + h U_r + b_r)
    n  = tanh(x W_n + (r * h) U_n + b_n)
    h' = (1 - z) * h + z * n

Sequences are time-major, shape (T, B, features).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


class ShapeError(ValueError):
    """Tensor shapes do not fit together."""


@dataclass
class GruParams:
    W: np.ndarray  # (input_dim, 3 * hidden)
    U: np.ndarray  # (hidden, 3 * hidden)
    b: np.ndarray  # (3 * hidden,)

    def __post_init__(self):
        if self.U.ndim != 2 or self.U.shape[1] != 3 * self.U.shape[0]:
            raise ShapeError(f"U must be (H, 3H), got {self.U.shape}")
        h = self.U.shape[0]
        if self.W.ndim != 2 or self.W.shape[1] != 3 * h:
            raise ShapeError(f"W must be (D, {3 * h}), got {self.W.shape}")
        if self.b.shape != (3 * h,):
            raise ShapeError(f"b must be ({3 * h},), got {self.b.shape}")

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[0]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GruParams":
        """Uniform in +/- sqrt(1 / fan_in); zero biases."""
        w_lim = np.sqrt(1.0 / input_dim)
        u_lim = np.sqrt(1.0 / hidden_dim)
        return cls(
            rng.uniform(-w_lim, w_lim, size=(input_dim, 3 * hidden_dim)),
            rng.uniform(-u_lim, u_lim, size=(hidden_dim, 3 * hidden_dim)),
            np.zeros(3 * hidden_dim),
        )


def row_dot(x: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``x @ M`` with a fixed summation order per row.

    BLAS picks its kernel from the batch shape, so ``x @ M`` can differ in the
    last bit between a batch of one and a larger batch.  Summing over an
    explicit axis keeps every row's result independent of its neighbours.
    """
    return (x[..., :, None] * M).sum(axis=-2)


def gru_cell_forward(x_t: np.ndarray, h_prev: np.ndarray, p: GruParams) -> np.ndarray:
    """One recurrence step. ``x_t`` is (..., D) and ``h_prev`` is (..., H).

    Results are bit-identical whatever the leading (batch) shape.
    """
    H = p.hidden_dim
    if x_t.shape[-1] != p.input_dim or h_prev.shape[-1] != H:
        raise ShapeError(
            f"cell expects input (..., {p.input_dim}) and state (..., {H}), "
            f"got {x_t.shape} and {h_prev.shape}"
        )
    a = row_dot(x_t, p.W) + p.b
    zr = expit(a[..., : 2 * H] + row_dot(h_prev, p.U[:, : 2 * H]))
    z, r = zr[..., :H], zr[..., H:]
    n = np.tanh(a[..., 2 * H:] + row_dot(r * h_prev, p.U[:, 2 * H:]))
    return (1.0 - z) * h_prev + z * n


@dataclass
class GruCache:
    X: np.ndarray
    h_prev: np.ndarray  # (T, B, H) state entering each step
    zr: np.ndarray      # (T, B, 2H)
    n: np.ndarray       # (T, B, H)


def _forward_loop(A, U, h0):
    T, B, H3 = A.shape
    H = H3 // 3
    states = np.empty((T, B, H))
    h_prev = np.empty((T, B, H))
    zr_all = np.empty((T, B, 2 * H))
    n_all = np.empty((T, B, H))
    h = h0.copy()
    for t in range(T):
        for bi in range(B):
            for j in range(2 * H):
                s = A[t, bi, j]
                for k in range(H):
                    s += h[bi, k] * U[k, j]
                zr_all[t, bi, j] = 1.0 / (1.0 + np.exp(-s))
            for j in range(H):
                s = A[t, bi, 2 * H + j]
                for k in range(H):
                    s += zr_all[t, bi, H + k] * h[bi, k] * U[k, 2 * H + j]
                n_all[t, bi, j] = np.tanh(s)
        for bi in range(B):
            for j in range(H):
                h_prev[t, bi, j] = h[bi, j]
                z = zr_all[t, bi, j]
                h[bi, j] = (1.0 - z) * h[bi, j] + z * n_all[t, bi, j]
                states[t, bi, j] = h[bi, j]
    return states, h_prev, zr_all, n_all


def _backward_loop(d_states, h_prev, zr_all, n_all, U):
    T, B, H = d_states.shape
    dA = np.empty((T, B, 3 * H))
    dh = np.zeros((B, H))
    d_rh = np.empty(H)
    for t in range(T - 1, -1, -1):
        for bi in range(B):
            for j in range(H):
                dh[bi, j] += d_states[t, bi, j]
            for j in range(H):
                z = zr_all[t, bi, j]
                n = n_all[t, bi, j]
                dA[t, bi, 2 * H + j] = dh[bi, j] * z * (1.0 - n * n)
                dA[t, bi, j] = dh[bi, j] * (n - h_prev[t, bi, j]) * z * (1.0 - z)
            for k in range(H):
                s = 0.0
                for j in range(H):
                    s += dA[t, bi, 2 * H + j] * U[k, 2 * H + j]
                d_rh[k] = s
            for k in range(H):
                r = zr_all[t, bi, H + k]
                dA[t, bi, H + k] = d_rh[k] * h_prev[t, bi, k] * r * (1.0 - r)
            for k in range(H):
                s = dh[bi, k] * (1.0 - zr_all[t, bi, k]) + d_rh[k] * zr_all[t, bi, H + k]
                for j in range(2 * H):
                    s += dA[t, bi, j] * U[k, j]
                dh[bi, k] = s
    return dA


if numba is not None:
    _forward_loop = numba.njit(cache=True)(_forward_loop)
    _backward_loop = numba.njit(cache=True)(_backward_loop)


def gru_sequence_forward(X: np.ndarray, p: GruParams, h0: np.ndarray | None = None,
                         compiled: bool = True):
    """Run the recurrence over a (T, B, D) sequence; returns states (T, B, H) and a cache.

    ``compiled`` selects the numba loop (when available) over the numpy one.
    """
    if X.ndim != 3 or X.shape[2] != p.input_dim:
        raise ShapeError(f"expected (T, B, {p.input_dim}) input, got {X.shape}")
    T, B, _ = X.shape
    H = p.hidden_dim
    A = X @ p.W + p.b
    if compiled and numba is not None:
        h = np.zeros((B, H)) if h0 is None else np.ascontiguousarray(h0, dtype=np.float64)
        states, h_prev, zr_all, n_all = _forward_loop(np.ascontiguousarray(A), np.ascontiguousarray(p.U), h)
        return states, GruCache(X, h_prev, zr_all, n_all)
    U_zr = np.ascontiguousarray(p.U[:, : 2 * H])
    U_n = np.ascontiguousarray(p.U[:, 2 * H:])
    states = np.empty((T, B, H))
    h_prev = np.empty((T, B, H))
    zr_all = np.empty((T, B, 2 * H))
    n_all = np.empty((T, B, H))
    h = np.zeros((B, H)) if h0 is None else h0
    for t in range(T):
        a = A[t]
        zr = expit(a[:, : 2 * H] + h @ U_zr)
        z = zr[:, :H]
        n = np.tanh(a[:, 2 * H:] + (zr[:, H:] * h) @ U_n)
        h_prev[t] = h
        h = (1.0 - z) * h + z * n
        states[t] = h
        zr_all[t] = zr
        n_all[t] = n
    return states, GruCache(X, h_prev, zr_all, n_all)


def _backward_numpy(d_states, cache: GruCache, p: GruParams) -> np.ndarray:
    T, B, H = d_states.shape
    U_zr_T = np.ascontiguousarray(p.U[:, : 2 * H].T)
    U_n_T = np.ascontiguousarray(p.U[:, 2 * H:].T)
    dA = np.empty((T, B, 3 * H))
    dh = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh + d_states[t]
        zr = cache.zr[t]
        z, r = zr[:, :H], zr[:, H:]
        n = cache.n[t]
        hp = cache.h_prev[t]
        dn_pre = dh * z * (1.0 - n * n)
        d_rh = dn_pre @ U_n_T
        dA[t, :, 2 * H:] = dn_pre
        dA[t, :, :H] = dh * (n - hp) * z * (1.0 - z)
        dA[t, :, H: 2 * H] = d_rh * hp * r * (1.0 - r)
        dh = dh * (1.0 - z) + d_rh * r + dA[t, :, : 2 * H] @ U_zr_T
    return dA


def gru_sequence_backward(d_states: np.ndarray, cache: GruCache, p: GruParams, compiled: bool = True):
    """Backpropagation through time.

    ``d_states`` holds dL/dh_t for every step (T, B, H).  Returns the input
    gradient (T, B, D) and a :class:`GruParams` of parameter gradients.
    """
    T, B, H = d_states.shape
    D = p.input_dim
    if compiled and numba is not None:
        dA = _backward_loop(np.ascontiguousarray(d_states), cache.h_prev, cache.zr, cache.n,
                            np.ascontiguousarray(p.U))
    else:
        dA = _backward_numpy(d_states, cache, p)

    flat_dA = dA.reshape(T * B, 3 * H)
    flat_hp = cache.h_prev.reshape(T * B, H)
    r_all = cache.zr[:, :, H:].reshape(T * B, H)
    dU = np.empty_like(p.U)
    dU[:, : 2 * H] = flat_hp.T @ flat_dA[:, : 2 * H]
    dU[:, 2 * H:] = (r_all * flat_hp).T @ flat_dA[:, 2 * H:]
    grads = GruParams(
        cache.X.reshape(T * B, D).T @ flat_dA,
        dU,
        flat_dA.sum(axis=0),
    )
    dX = dA @ p.W.T
    return dX, grads
