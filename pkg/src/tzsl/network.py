"""Two-layer tanh projection network with hand-derived gradients.

The network maps a semantic vector ``e`` (dimension ``d``) into feature
space (dimension ``m``) through one hidden layer of width ``h1``::

    y = tanh(W2^T tanh(W1^T e + b1) + b2)

Everything is dense float64. Gradients are exact and computed by
backpropagation through this fixed architecture; :func:`finite_diff_grad`
provides an independent central-difference oracle for testing them.

All reductions run through compiled kernels with pinned accumulation
orders rather than BLAS, whose kernel choice varies with the batch shape.
Every row of a batched forward/backward is therefore bitwise identical to
the same sample processed alone, and the gradient of a batch is bitwise
the left-to-right sum of the per-sample gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit
from numpy.typing import NDArray

from .errors import NumericError, ShapeError, ValidationError

Array = NDArray[np.float64]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _as_f64(a, what: str) -> Array:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 0:
        raise ShapeError(what, "an array", "a scalar")
    return arr


@dataclass(frozen=True)
class ProjectionNet:
    """Parameter container: ``w1 (d,h1)``, ``b1 (h1,)``, ``w2 (h1,m)``, ``b2 (m,)``.

    The same container is reused for anything shaped like the parameters
    (gradients, Adam moment accumulators).
    """

    w1: Array
    b1: Array
    w2: Array
    b2: Array

    def __post_init__(self):
        object.__setattr__(self, "w1", _as_f64(self.w1, "w1"))
        object.__setattr__(self, "b1", _as_f64(self.b1, "b1"))
        object.__setattr__(self, "w2", _as_f64(self.w2, "w2"))
        object.__setattr__(self, "b2", _as_f64(self.b2, "b2"))
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ShapeError("weights", "2-d arrays", (self.w1.ndim, self.w2.ndim))
        d, h1 = self.w1.shape
        h1b, m = self.w2.shape
        if h1 != h1b:
            raise ShapeError("w2 rows", h1, h1b)
        if self.b1.shape != (h1,):
            raise ShapeError("b1", (h1,), self.b1.shape)
        if self.b2.shape != (m,):
            raise ShapeError("b2", (m,), self.b2.shape)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[1]

    def arrays(self) -> tuple[Array, Array, Array, Array]:
        return (self.w1, self.b1, self.w2, self.b2)

    def copy(self) -> "ProjectionNet":
        return ProjectionNet(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def allfinite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def zeros_like_net(net: ProjectionNet) -> ProjectionNet:
    return ProjectionNet(*(np.zeros_like(a) for a in net.arrays()))


def init_net(input_dim: int, hidden_dim: int, output_dim: int, seed) -> ProjectionNet:
    """Glorot-uniform weights, zero biases, fully determined by ``seed``."""
    if min(input_dim, hidden_dim, output_dim) < 1:
        raise ValidationError(
            f"network dims must be >= 1, got ({input_dim}, {hidden_dim}, {output_dim})"
        )
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (input_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + output_dim))
    w1 = rng.uniform(-lim1, lim1, size=(input_dim, hidden_dim))
    w2 = rng.uniform(-lim2, lim2, size=(hidden_dim, output_dim))
    return ProjectionNet(w1, np.zeros(hidden_dim), w2, np.zeros(output_dim))


def _check_input(net: ProjectionNet, e: Array, what: str) -> tuple[Array, bool]:
    """Return (2-d view of e, was_single_vector)."""
    arr = _as_f64(e, what)
    if arr.ndim == 1:
        if arr.shape[0] != net.input_dim:
            raise ShapeError(what, (net.input_dim,), arr.shape)
        return arr[None, :], True
    if arr.ndim == 2:
        if arr.shape[1] != net.input_dim:
            raise ShapeError(what, ("n", net.input_dim), arr.shape)
        return arr, False
    raise ShapeError(what, "1-d or 2-d array", f"{arr.ndim}-d array")


def forward(net: ProjectionNet, e) -> Array:
    """Project semantic vector(s) into feature space.

    Accepts a single ``(d,)`` vector or an ``(n, d)`` batch and returns the
    matching ``(m,)`` or ``(n, m)`` array. Pure; every output coordinate
    lies in the open interval (-1, 1) for finite weights; each batch row
    equals the single-vector result bitwise.
    """
    x, single = _check_input(net, e, "semantic input")
    h = np.tanh(_affine_rows(x, net.w1, net.b1))
    y = np.tanh(_affine_rows(h, net.w2, net.b2))
    return y[0] if single else y


# Kernel notes: accumulation over the contraction index k runs strictly
# in order for every output entry, each product rounded before its add,
# so results do not depend on the batch size (unlike BLAS dispatch).


@njit(cache=True)
def _affine_rows_kernel(x, w, b, out):  # pragma: no cover - jitted
    # out[i, j] = b[j] + sum_k x[i, k] * w[k, j]
    n, d = x.shape
    h = w.shape[1]
    for i in range(n):
        for j in range(h):
            out[i, j] = b[j]
        for k in range(d):
            xv = x[i, k]
            for j in range(h):
                out[i, j] = out[i, j] + xv * w[k, j]


def _affine_rows(x: Array, w: Array, b: Array) -> Array:
    out = np.empty((x.shape[0], w.shape[1]))
    _affine_rows_kernel(np.ascontiguousarray(x), np.ascontiguousarray(w), b, out)
    return out


def _matmul_rows(x: Array, w: Array) -> Array:
    out = np.empty((x.shape[0], w.shape[1]))
    _affine_rows_kernel(
        np.ascontiguousarray(x), np.ascontiguousarray(w), np.zeros(w.shape[1]), out
    )
    return out


@njit(cache=True)
def _outer_sum_kernel(left, right, out):  # pragma: no cover - jitted
    n, p = left.shape
    q = right.shape[1]
    for a in range(p):
        la = left[0, a]
        for b in range(q):
            out[a, b] = la * right[0, b]
    for i in range(1, n):
        for a in range(p):
            la = left[i, a]
            for b in range(q):
                out[a, b] = out[a, b] + la * right[i, b]


def _outer_sum(left: Array, right: Array) -> Array:
    """Left-to-right batch sum of outer products: sum_i left[i] x right[i]."""
    out = np.empty((left.shape[1], right.shape[1]))
    _outer_sum_kernel(np.ascontiguousarray(left), np.ascontiguousarray(right), out)
    return out


def _reduce_batch(per_sample: Array) -> Array:
    # Left-to-right accumulation over axis 0; order is part of the contract.
    out = per_sample[0].copy()
    for i in range(1, per_sample.shape[0]):
        out += per_sample[i]
    return out


@njit(cache=True)
def _adam_kernel(p, g, m, v, beta1, beta2, eps, lr, bc1, bc2,
                 p_out, m_out, v_out):  # pragma: no cover - jitted
    for i in range(p.size):
        m_t = beta1 * m[i] + (1.0 - beta1) * g[i]
        v_t = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
        m_out[i] = m_t
        v_out[i] = v_t
        p_out[i] = p[i] - lr * (m_t / bc1) / (np.sqrt(v_t / bc2) + eps)


def backward(net: ProjectionNet, inputs, upstream) -> ProjectionNet:
    """Exact parameter gradient given per-sample upstream gradients.

    ``inputs`` is the ``(n, d)`` batch of semantic vectors and ``upstream``
    the ``(n, m)`` array of dL/dy for each sample's output. The result is
    linear in ``upstream`` and sums sample contributions in batch order.
    """
    x = _as_f64(inputs, "inputs")
    g = _as_f64(upstream, "upstream")
    if x.ndim == 1:
        x = x[None, :]
    if g.ndim == 1:
        g = g[None, :]
    if x.shape[0] == 0:
        raise ValidationError("backward needs a nonempty batch")
    if x.shape != (x.shape[0], net.input_dim):
        raise ShapeError("inputs", ("n", net.input_dim), x.shape)
    if g.shape != (x.shape[0], net.output_dim):
        raise ShapeError("upstream", (x.shape[0], net.output_dim), g.shape)
    if not np.isfinite(g).all():
        raise NumericError("non-finite upstream gradient")

    h = np.tanh(_affine_rows(x, net.w1, net.b1))
    y = np.tanh(_affine_rows(h, net.w2, net.b2))
    dz2 = g * (1.0 - y * y)
    dh = _matmul_rows(dz2, np.ascontiguousarray(net.w2.T))
    dz1 = dh * (1.0 - h * h)

    dw2 = _outer_sum(h, dz2)
    db2 = _reduce_batch(dz2)
    dw1 = _outer_sum(x, dz1)
    db1 = _reduce_batch(dz1)
    return ProjectionNet(dw1, db1, dw2, db2)


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators plus the update counter."""

    step: int
    m: ProjectionNet
    v: ProjectionNet
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS


def init_adam(net: ProjectionNet) -> AdamState:
    return AdamState(step=0, m=zeros_like_net(net), v=zeros_like_net(net))


def adam_step(
    net: ProjectionNet, grad: ProjectionNet, state: AdamState, lr: float
) -> tuple[ProjectionNet, AdamState]:
    """One bias-corrected Adam update; returns the new net and state.

    Follows the standard update with epsilon outside the square root:
    ``p -= lr * mhat / (sqrt(vhat) + eps)``. Rejects non-finite gradients
    without touching the state.
    """
    if lr <= 0:
        raise ValidationError(f"learning rate must be > 0, got {lr}")
    for g, p in zip(grad.arrays(), net.arrays()):
        if g.shape != p.shape:
            raise ShapeError("gradient", p.shape, g.shape)
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient passed to adam_step")

    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(net.arrays(), grad.arrays(), state.m.arrays(), state.v.arrays()):
        p_out, m_out, v_out = np.empty_like(p), np.empty_like(p), np.empty_like(p)
        _adam_kernel(
            np.ascontiguousarray(p).reshape(-1), np.ascontiguousarray(g).reshape(-1),
            np.ascontiguousarray(m).reshape(-1), np.ascontiguousarray(v).reshape(-1),
            state.beta1, state.beta2, state.eps, lr, bc1, bc2,
            p_out.reshape(-1), m_out.reshape(-1), v_out.reshape(-1),
        )
        new_params.append(p_out)
        new_m.append(m_out)
        new_v.append(v_out)
    return (
        ProjectionNet(*new_params),
        AdamState(t, ProjectionNet(*new_m), ProjectionNet(*new_v), state.beta1, state.beta2, state.eps),
    )


def finite_diff_grad(
    loss_fn: Callable[[ProjectionNet], float], net: ProjectionNet, h: float = 1e-5
) -> ProjectionNet:
    """Central-difference gradient of ``loss_fn`` at ``net``.

    Test oracle only: O(#parameters) loss evaluations, so keep the nets
    small. ``loss_fn`` must be pure in the parameters.
    """
    if h <= 0:
        raise ValidationError(f"step size must be > 0, got {h}")
    work = net.copy()
    grads = []
    for arr in work.arrays():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            f_plus = float(loss_fn(work))
            arr[idx] = orig - h
            f_minus = float(loss_fn(work))
            arr[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError("loss evaluated to a non-finite value")
            g[idx] = (f_plus - f_minus) / (2.0 * h)
        grads.append(g)
    return ProjectionNet(*grads)
