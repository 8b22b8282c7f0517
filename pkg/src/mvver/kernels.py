"""Training kernels for the built-in classifiers.

All parameters of a model live in one flat float64 vector ``theta`` so that
Adam, gradient checks and serialization see a single array. Layouts:

* softmax: ``W (d, C)`` then ``b (C,)``
* mlp:     ``W1 (d, H)``, ``b1 (H,)``, ``W2 (H, C)``, ``b2 (C,)``

Two interchangeable implementations are provided: loop kernels compiled
with numba, and vectorized numpy kernels. ``get_backend()`` returns the one
selected by :mod:`mvver._jit`; both are always importable for benchmarks.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from mvver import _jit

PROB_FLOOR = 1e-12


def softmax_rows(logits):
    """Row-wise softmax with max subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_size(d, C):
    return d * C + C


def mlp_size(d, H, C):
    return d * H + H + H * C + C


# ---------------------------------------------------------------------------
# numpy kernels
# ---------------------------------------------------------------------------


def _np_softmax_objective(theta, X, y, idx, d, C, l2, grad):
    W = theta[: d * C].reshape(d, C)
    b = theta[d * C :]
    Xb = X[idx]
    yb = y[idx]
    B = idx.shape[0]
    P = softmax_rows(Xb @ W + b)
    rows = np.arange(B)
    loss = -np.log(np.maximum(P[rows, yb], PROB_FLOOR)).sum() / B
    G = P
    G[rows, yb] -= 1.0
    G /= B
    gW = grad[: d * C].reshape(d, C)
    gW[:] = Xb.T @ G + l2 * W
    grad[d * C :] = G.sum(axis=0)
    return loss + 0.5 * l2 * float(np.dot(theta[: d * C], theta[: d * C]))


def _np_mlp_objective(theta, X, y, idx, d, H, C, l2, grad):
    o1 = d * H
    o2 = o1 + H
    o3 = o2 + H * C
    W1 = theta[:o1].reshape(d, H)
    b1 = theta[o1:o2]
    W2 = theta[o2:o3].reshape(H, C)
    b2 = theta[o3:]
    Xb = X[idx]
    yb = y[idx]
    B = idx.shape[0]
    Z = Xb @ W1 + b1
    A = np.maximum(Z, 0.0)
    P = softmax_rows(A @ W2 + b2)
    rows = np.arange(B)
    loss = -np.log(np.maximum(P[rows, yb], PROB_FLOOR)).sum() / B
    G = P
    G[rows, yb] -= 1.0
    G /= B
    grad[o2:o3].reshape(H, C)[:] = A.T @ G + l2 * W2
    grad[o3:] = G.sum(axis=0)
    dZ = (G @ W2.T) * (Z > 0.0)
    grad[:o1].reshape(d, H)[:] = Xb.T @ dZ + l2 * W1
    grad[o1:o2] = dZ.sum(axis=0)
    reg = float(np.dot(theta[:o1], theta[:o1])) + float(np.dot(theta[o2:o3], theta[o2:o3]))
    return loss + 0.5 * l2 * reg


def _np_adam_step(theta, grad, m, v, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


def _np_train(objective, shape_args, theta, X, y, orders, batch_size, lr, beta1, beta2, eps, l2):
    N = X.shape[0]
    epochs = orders.shape[0]
    grad = np.zeros_like(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    losses = np.empty(epochs)
    t = 0
    for e in range(epochs):
        total = 0.0
        for start in range(0, N, batch_size):
            idx = orders[e, start : start + batch_size]
            loss = objective(theta, X, y, idx, *shape_args, l2, grad)
            total += loss * idx.shape[0]
            t += 1
            _np_adam_step(theta, grad, m, v, t, lr, beta1, beta2, eps)
        losses[e] = total / N
        if not np.isfinite(losses[e]) or not np.all(np.isfinite(theta)):
            losses[e] = np.nan
            return losses[: e + 1]
    return losses


def _np_train_softmax(theta, X, y, orders, d, C, batch_size, lr, beta1, beta2, eps, l2):
    return _np_train(
        _np_softmax_objective, (d, C), theta, X, y, orders, batch_size, lr, beta1, beta2, eps, l2
    )


def _np_train_mlp(theta, X, y, orders, d, H, C, batch_size, lr, beta1, beta2, eps, l2):
    return _np_train(
        _np_mlp_objective, (d, H, C), theta, X, y, orders, batch_size, lr, beta1, beta2, eps, l2
    )


# ---------------------------------------------------------------------------
# numba kernels (explicit loops; also valid, if slow, as plain python)
# ---------------------------------------------------------------------------


@_jit.njit
def _nb_softmax_objective(theta, X, y, idx, d, C, l2, grad):
    W = theta[: d * C].reshape((d, C))
    b = theta[d * C :]
    gW = grad[: d * C].reshape((d, C))
    gb = grad[d * C :]
    grad[:] = 0.0
    B = idx.shape[0]
    logits = np.empty(C)
    loss = 0.0
    for r in range(B):
        i = idx[r]
        for c in range(C):
            s = b[c]
            for k in range(d):
                s += X[i, k] * W[k, c]
            logits[c] = s
        mx = logits[0]
        for c in range(1, C):
            if logits[c] > mx:
                mx = logits[c]
        tot = 0.0
        for c in range(C):
            logits[c] = np.exp(logits[c] - mx)
            tot += logits[c]
        yi = y[i]
        p_true = 1.0
        for c in range(C):
            g = logits[c] / tot
            if c == yi:
                p_true = g
                g -= 1.0
            g /= B
            gb[c] += g
            for k in range(d):
                gW[k, c] += X[i, k] * g
        loss -= np.log(max(p_true, 1e-12))
    loss /= B
    reg = 0.0
    for k in range(d):
        for c in range(C):
            gW[k, c] += l2 * W[k, c]
            reg += W[k, c] * W[k, c]
    return loss + 0.5 * l2 * reg


@_jit.njit
def _nb_mlp_objective(theta, X, y, idx, d, H, C, l2, grad):
    o1 = d * H
    o2 = o1 + H
    o3 = o2 + H * C
    W1 = theta[:o1].reshape((d, H))
    b1 = theta[o1:o2]
    W2 = theta[o2:o3].reshape((H, C))
    b2 = theta[o3:]
    gW1 = grad[:o1].reshape((d, H))
    gb1 = grad[o1:o2]
    gW2 = grad[o2:o3].reshape((H, C))
    gb2 = grad[o3:]
    grad[:] = 0.0
    B = idx.shape[0]
    z = np.empty(H)
    a = np.empty(H)
    delta = np.empty(H)
    logits = np.empty(C)
    gl = np.empty(C)
    loss = 0.0
    # loops are ordered so the innermost index walks contiguous memory
    for r in range(B):
        i = idx[r]
        for h in range(H):
            z[h] = b1[h]
        for k in range(d):
            xk = X[i, k]
            for h in range(H):
                z[h] += xk * W1[k, h]
        for h in range(H):
            a[h] = z[h] if z[h] > 0.0 else 0.0
        for c in range(C):
            logits[c] = b2[c]
        for h in range(H):
            ah = a[h]
            for c in range(C):
                logits[c] += ah * W2[h, c]
        mx = logits[0]
        for c in range(1, C):
            if logits[c] > mx:
                mx = logits[c]
        tot = 0.0
        for c in range(C):
            logits[c] = np.exp(logits[c] - mx)
            tot += logits[c]
        yi = y[i]
        p_true = 1.0
        for c in range(C):
            g = logits[c] / tot
            if c == yi:
                p_true = g
                g -= 1.0
            g /= B
            gl[c] = g
            gb2[c] += g
        loss -= np.log(max(p_true, 1e-12))
        for h in range(H):
            ah = a[h]
            s = 0.0
            for c in range(C):
                gW2[h, c] += ah * gl[c]
                s += gl[c] * W2[h, c]
            delta[h] = s if z[h] > 0.0 else 0.0
            gb1[h] += delta[h]
        for k in range(d):
            xk = X[i, k]
            for h in range(H):
                gW1[k, h] += xk * delta[h]
    loss /= B
    reg = 0.0
    for k in range(d):
        for h in range(H):
            gW1[k, h] += l2 * W1[k, h]
            reg += W1[k, h] * W1[k, h]
    for h in range(H):
        for c in range(C):
            gW2[h, c] += l2 * W2[h, c]
            reg += W2[h, c] * W2[h, c]
    return loss + 0.5 * l2 * reg


@_jit.njit
def _nb_adam_step(theta, grad, m, v, t, lr, beta1, beta2, eps):
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for j in range(theta.shape[0]):
        g = grad[j]
        m[j] = beta1 * m[j] + (1.0 - beta1) * g
        v[j] = beta2 * v[j] + (1.0 - beta2) * (g * g)
        theta[j] -= lr * (m[j] / bc1) / (np.sqrt(v[j] / bc2) + eps)


@_jit.njit
def _nb_all_finite(a):
    for j in range(a.shape[0]):
        if not np.isfinite(a[j]):
            return False
    return True


@_jit.njit
def _nb_train_softmax(theta, X, y, orders, d, C, batch_size, lr, beta1, beta2, eps, l2):
    N = X.shape[0]
    epochs = orders.shape[0]
    grad = np.zeros_like(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    losses = np.empty(epochs)
    t = 0
    for e in range(epochs):
        total = 0.0
        for start in range(0, N, batch_size):
            idx = orders[e, start : min(start + batch_size, N)]
            loss = _nb_softmax_objective(theta, X, y, idx, d, C, l2, grad)
            total += loss * idx.shape[0]
            t += 1
            _nb_adam_step(theta, grad, m, v, t, lr, beta1, beta2, eps)
        losses[e] = total / N
        if not np.isfinite(losses[e]) or not _nb_all_finite(theta):
            losses[e] = np.nan
            return losses[: e + 1]
    return losses


@_jit.njit
def _nb_train_mlp(theta, X, y, orders, d, H, C, batch_size, lr, beta1, beta2, eps, l2):
    N = X.shape[0]
    epochs = orders.shape[0]
    grad = np.zeros_like(theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    losses = np.empty(epochs)
    t = 0
    for e in range(epochs):
        total = 0.0
        for start in range(0, N, batch_size):
            idx = orders[e, start : min(start + batch_size, N)]
            loss = _nb_mlp_objective(theta, X, y, idx, d, H, C, l2, grad)
            total += loss * idx.shape[0]
            t += 1
            _nb_adam_step(theta, grad, m, v, t, lr, beta1, beta2, eps)
        losses[e] = total / N
        if not np.isfinite(losses[e]) or not _nb_all_finite(theta):
            losses[e] = np.nan
            return losses[: e + 1]
    return losses


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Backend:
    name: str
    softmax_objective: Callable
    mlp_objective: Callable
    train_softmax: Callable
    train_mlp: Callable


NUMPY = Backend(
    "numpy", _np_softmax_objective, _np_mlp_objective, _np_train_softmax, _np_train_mlp
)
NUMBA = Backend(
    "numba", _nb_softmax_objective, _nb_mlp_objective, _nb_train_softmax, _nb_train_mlp
)

BACKENDS = {"numpy": NUMPY}
if _jit.HAVE_NUMBA:
    BACKENDS["numba"] = NUMBA


def get_backend(name=None):
    """Return a kernel backend; ``None`` means the environment default."""
    if name is None:
        name = "numba" if _jit.ENABLE_JIT else "numpy"
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}")
