"""Dense float64 math substrate.

Everything downstream (losses, the dual-branch model, the context encoder)
is built from the handful of primitives here, each with a hand-derived
backward pass. ``grad_check`` is the verification oracle that gates the
rest of the package: any new loss or layer must match central finite
differences before it is trusted.
"""

import numpy as np


class ConfigurationError(ValueError):
    """An unusable combination of configuration values."""


def as_array(x):
    """Coerce to a float64 ndarray (the only dtype this package computes in)."""
    return np.asarray(x, dtype=np.float64)


def softmax(z, axis=-1):
    """Numerically stable softmax along ``axis`` (max-subtraction).

    Raises ValueError on empty input. Output rows are nonnegative and sum
    to 1 within 1e-12 even for entries with magnitude up to ~1e3.
    """
    z = as_array(z)
    if z.size == 0:
        raise ValueError("softmax of an empty array")
    m = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = as_array(z)
    if z.size == 0:
        raise ValueError("log_softmax of an empty array")
    m = np.max(z, axis=axis, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax_vjp(p, grad_p, axis=-1):
    """Backward through softmax: given p = softmax(z) and dL/dp, return dL/dz."""
    inner = np.sum(p * grad_p, axis=axis, keepdims=True)
    return p * (grad_p - inner)


def linear_forward(x, w, b):
    """y = x @ w + b for x of shape (n, fan_in), w (fan_in, fan_out), b (fan_out,)."""
    return x @ w + b


def linear_backward(x, w, grad_y):
    """Gradients of a linear layer: returns (grad_x, grad_w, grad_b)."""
    return grad_y @ w.T, x.T @ grad_y, grad_y.sum(axis=0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(pre_activation, grad_out):
    return grad_out * (pre_activation > 0.0)


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    """Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-a, a, size=shape)


class ParamStore:
    """Named float64 parameters with matching gradient accumulators.

    Names are unique; gradients always have the shape of their parameter.
    Frozen parameters (embedding tables, the prior-bias table) keep a
    gradient buffer for uniformity but are skipped by ``sgd_step``.
    Single-writer during training: no concurrent mutation.
    """

    def __init__(self):
        self._params = {}
        self._grads = {}
        self._trainable = {}

    def add(self, name, value, trainable=True):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        value = as_array(value)
        self._params[name] = value
        self._grads[name] = np.zeros_like(value)
        self._trainable[name] = bool(trainable)
        return value

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name):
        return self._params[name]

    def grad(self, name):
        return self._grads[name]

    def is_trainable(self, name):
        return self._trainable[name]

    def names(self):
        return sorted(self._params)

    def trainable_names(self):
        return [n for n in self.names() if self._trainable[n]]

    def zero_grads(self):
        for g in self._grads.values():
            g.fill(0.0)

    def accumulate(self, name, grad):
        buf = self._grads[name]
        if np.shape(grad) != buf.shape:
            raise ValueError(
                f"gradient shape {np.shape(grad)} does not match parameter "
                f"{name!r} of shape {buf.shape}"
            )
        buf += grad

    def sgd_step(self, learning_rate):
        for name in self.trainable_names():
            self._params[name] -= learning_rate * self._grads[name]


def grad_check(loss_fn, store, eps=1e-5, names=None):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(store)`` must return a scalar loss and accumulate the analytic
    gradients into the store; it must be deterministic. Every element of
    every checked parameter is perturbed by +/-eps; per parameter, the
    analytic and central-difference gradients are compared as
    |analytic - central| / max(|analytic|, |central|, 1e-8) with |.| the
    Euclidean norm over the parameter, and the max over parameters is
    returned. (The per-parameter norm is what central differences can
    actually resolve: individual elements whose true derivative sits near
    the float64 differencing floor would otherwise report pure roundoff.)
    ``names`` restricts the check to a subset of the trainable parameters.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    checked = store.trainable_names() if names is None else sorted(names)
    for name in checked:
        if not store.is_trainable(name):
            raise ValueError(f"cannot grad-check frozen parameter {name!r}")
    store.zero_grads()
    base = float(loss_fn(store))
    if not np.isfinite(base):
        raise ValueError("non-finite loss at the unperturbed point")
    analytic = {n: store.grad(n).copy() for n in checked}

    worst = 0.0
    for name in checked:
        param = store[name]
        flat = param.reshape(-1)
        central = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            store.zero_grads()
            plus = float(loss_fn(store))
            flat[i] = orig - eps
            store.zero_grads()
            minus = float(loss_fn(store))
            flat[i] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise ValueError(
                    f"non-finite loss while perturbing parameter {name!r} "
                    f"at flat index {i}"
                )
            central[i] = (plus - minus) / (2.0 * eps)
        a_norm = float(np.linalg.norm(analytic[name]))
        c_norm = float(np.linalg.norm(central))
        diff = float(np.linalg.norm(analytic[name].reshape(-1) - central))
        worst = max(worst, diff / max(a_norm, c_norm, 1e-8))
    # leave the store holding the analytic gradients of the unperturbed point
    store.zero_grads()
    loss_fn(store)
    return worst
