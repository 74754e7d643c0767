"""Dense float64 layers with hand-written gradients, losses, and Adam.

Everything here is ordinary numpy on 64-bit floats; gradients are coded
analytically (no autodiff) and verified against central finite differences
by `grad_check` in the test suite.  Batch variants operate on row-stacked
inputs and accumulate into the same gradient buffers as the vector paths.
"""

import math

import numpy as np

from .errors import DegenerateInputError, DimensionError

NORM_GUARD = 1e-12


def _as_f64(x):
    return np.asarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with loud shape validation."""
    a = _as_f64(a)
    b = _as_f64(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


class LinearLayer:
    """Affine layer y = W x + b with gradient accumulation buffers."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = _as_f64(weight)
        self.bias = _as_f64(bias)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise DimensionError(
                f"linear layer wants (out,in) weight and (out,) bias, got "
                f"{self.weight.shape} and {self.bias.shape}"
            )
        if self.weight.shape[0] != self.bias.shape[0]:
            raise DimensionError(
                f"weight rows {self.weight.shape[0]} != bias length {self.bias.shape[0]}"
            )
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @classmethod
    def initialized(cls, out_dim: int, in_dim: int, rng: np.random.Generator) -> "LinearLayer":
        # uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)] for weight and bias
        limit = math.sqrt(1.0 / in_dim)
        weight = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        bias = rng.uniform(-limit, limit, size=out_dim)
        return cls(weight, bias)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    def zero_grad(self) -> None:
        self.grad_weight.fill(0.0)
        self.grad_bias.fill(0.0)


def linear_forward(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    x = _as_f64(x)
    if x.ndim != 1 or x.shape[0] != layer.in_dim:
        raise DimensionError(f"linear forward: input {x.shape} vs weight {layer.weight.shape}")
    return layer.weight @ x + layer.bias


def linear_backward(layer: LinearLayer, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Accumulate dW += u x^T, db += u; return dL/dx = W^T u."""
    x = _as_f64(x)
    upstream = _as_f64(upstream)
    if x.shape != (layer.in_dim,) or upstream.shape != (layer.out_dim,):
        raise DimensionError(
            f"linear backward: x {x.shape}, upstream {upstream.shape} vs weight "
            f"{layer.weight.shape}"
        )
    layer.grad_weight += np.outer(upstream, x)
    layer.grad_bias += upstream
    return layer.weight.T @ upstream


def linear_forward_batch(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    x = _as_f64(x)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise DimensionError(f"linear batch forward: input {x.shape} vs weight {layer.weight.shape}")
    return x @ layer.weight.T + layer.bias


def linear_backward_batch(layer: LinearLayer, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if upstream.shape != (x.shape[0], layer.out_dim):
        raise DimensionError(
            f"linear batch backward: x {x.shape}, upstream {upstream.shape} vs weight "
            f"{layer.weight.shape}"
        )
    layer.grad_weight += upstream.T @ x
    layer.grad_bias += upstream.sum(axis=0)
    return upstream @ layer.weight


def relu(x: np.ndarray) -> np.ndarray:
    x = _as_f64(x)
    if x.size == 0:
        raise DimensionError("relu on empty input")
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the pre-activation x (subgradient 0 at x == 0)."""
    return np.where(_as_f64(x) > 0.0, upstream, 0.0)


def softmax(x: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis (max-subtracted)."""
    x = _as_f64(x)
    if x.size == 0:
        raise DimensionError("softmax on empty input")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(y: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient through softmax given its output y: dx = y * (u - <u, y>)."""
    y = _as_f64(y)
    upstream = _as_f64(upstream)
    inner = (upstream * y).sum(axis=-1, keepdims=True)
    return y * (upstream - inner)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    a = _as_f64(a)
    b = _as_f64(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"cosine_sim on shapes {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine_sim of a zero-norm vector")
    return float(a @ b / (max(na, NORM_GUARD) * max(nb, NORM_GUARD)))


def cosine_sim_backward(a: np.ndarray, b: np.ndarray, upstream: float = 1.0):
    """Return (dL/da, dL/db) for L = upstream * cos(a, b)."""
    a = _as_f64(a)
    b = _as_f64(b)
    na = max(float(np.linalg.norm(a)), NORM_GUARD)
    nb = max(float(np.linalg.norm(b)), NORM_GUARD)
    c = float(a @ b) / (na * nb)
    da = upstream * (b / (na * nb) - c * a / (na * na))
    db = upstream * (a / (na * nb) - c * b / (nb * nb))
    return da, db


def mse(x: np.ndarray, y: np.ndarray) -> float:
    x = _as_f64(x)
    y = _as_f64(y)
    if x.shape != y.shape:
        raise DimensionError(f"mse on shapes {x.shape} and {y.shape}")
    d = y - x
    return float((d * d).mean())


def mse_backward(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of mse(x, y) w.r.t. y: 2 (y - x) / n."""
    x = _as_f64(x)
    y = _as_f64(y)
    if x.shape != y.shape:
        raise DimensionError(f"mse grad on shapes {x.shape} and {y.shape}")
    return 2.0 * (y - x) / x.size


class AdamState:
    """Per-parameter first/second moment buffers plus step count."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = [np.zeros_like(p) for p in params]
        self.second_moment = [np.zeros_like(p) for p in params]


def adam_step(params, grads, state: AdamState) -> None:
    """Bias-corrected Adam update in place; gradients are zeroed afterwards."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise DimensionError(
            f"adam_step got {len(params)} params, {len(grads)} grads, "
            f"{len(state.first_moment)} moment buffers"
        )
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"adam_step shape mismatch: param {p.shape} vs grad {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        g.fill(0.0)


def grad_check(f, params, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` is a zero-argument callable returning (loss, grads) evaluated at the
    current parameter values; `params` are the ndarrays it reads, perturbed
    in place entry by entry.  Relative error per entry is
    |analytic - fd| / max(|analytic|, |fd|, 1e-8).
    """
    _, grads = f()
    grads = [np.array(g, dtype=np.float64, copy=True) for g in grads]
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = f()[0]
            flat[i] = orig - h
            lm = f()[0]
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst
