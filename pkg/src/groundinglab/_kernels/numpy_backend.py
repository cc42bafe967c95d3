"""Pure-numpy implementations of the hot numerical kernels.

This is the fallback backend; the compiled extension in ``_fastcore.pyx``
implements the same functions with identical semantics. All arrays are
C-contiguous float64 unless noted. Shapes follow the conventions of the
tensor core: row dimension first, feature dimension last.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def softmax_fwd(x):
    """Row-wise softmax over the last axis of a 2-d array."""
    m = np.max(x, axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=1, keepdims=True)


def softmax_bwd(y, dy):
    s = np.sum(y * dy, axis=1, keepdims=True)
    return y * (dy - s)


def log_softmax_fwd(x):
    m = np.max(x, axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    return z - lse


def log_softmax_bwd(y, dy):
    # y holds log-probabilities; softmax, not x, is what the gradient needs.
    return dy - np.exp(y) * np.sum(dy, axis=1, keepdims=True)


def layernorm_fwd(x, gamma, beta, eps):
    """Normalize rows of a 2-d array; returns (y, mean, rstd) for backward."""
    mu = np.mean(x, axis=1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * rstd
    y = xhat * gamma + beta
    return y, mu.ravel(), rstd.ravel()


def layernorm_bwd(x, gamma, mu, rstd, dy):
    n = x.shape[1]
    mu = mu[:, None]
    rstd = rstd[:, None]
    xhat = (x - mu) * rstd
    dgamma = np.sum(dy * xhat, axis=0)
    dbeta = np.sum(dy, axis=0)
    dxhat = dy * gamma
    dx = rstd * (dxhat - np.mean(dxhat, axis=1, keepdims=True)
                 - xhat * np.mean(dxhat * xhat, axis=1, keepdims=True))
    return dx, dgamma, dbeta


# tanh-approximation GELU; both backends use the same formula so results match
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu_fwd(x):
    inner = _GELU_C * (x + _GELU_A * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_bwd(x, dy):
    inner = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(inner)
    sech2 = 1.0 - t * t
    dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * sech2 * dinner)


def _chunk_size(h, tq, tk):
    # keep the transient [Bc, H, Tq, Tk] score tensor around 32 MB
    return max(1, int(4_000_000 // max(1, h * tq * tk)))


def _masked_probs(qc, kc, lens, causal, q_offset):
    tq, tk = qc.shape[2], kc.shape[2]
    scale = 1.0 / np.sqrt(qc.shape[3])
    scores = np.matmul(qc, np.swapaxes(kc, 2, 3)) * scale
    allowed = np.arange(tk)[None, None, None, :] < lens[:, None, None, None]
    if causal:
        rows = np.arange(tq)[:, None] + q_offset
        allowed = allowed & (np.arange(tk)[None, :] <= rows)
    scores = np.where(allowed, scores, -np.inf)
    m = np.max(scores, axis=3, keepdims=True)
    e = np.exp(scores - m)
    return e / np.sum(e, axis=3, keepdims=True)


def attention_fwd(q, k, v, key_lens, causal, q_offset):
    """Masked scaled dot-product attention.

    q: [B, H, Tq, dh], k/v: [B, H, Tk, dh], key_lens: [B] int64.
    Query at sequence position q_offset + i attends keys j with
    j < key_lens[b] and, if causal, j <= q_offset + i. Every query must
    have at least one admissible key. Probabilities are recomputed in the
    backward pass to keep memory flat.
    """
    b_, h, tq, _ = q.shape
    out = np.empty_like(q)
    step = _chunk_size(h, tq, k.shape[2])
    for s in range(0, b_, step):
        sl = slice(s, s + step)
        probs = _masked_probs(q[sl], k[sl], key_lens[sl], causal, q_offset)
        out[sl] = np.matmul(probs, v[sl])
    return out


def attention_bwd(q, k, v, key_lens, causal, q_offset, dout):
    b_, h, tq, dh = q.shape
    scale = 1.0 / np.sqrt(dh)
    dq = np.empty_like(q)
    dk = np.empty_like(k)
    dv = np.empty_like(v)
    step = _chunk_size(h, tq, k.shape[2])
    for s in range(0, b_, step):
        sl = slice(s, s + step)
        probs = _masked_probs(q[sl], k[sl], key_lens[sl], causal, q_offset)
        dv[sl] = np.matmul(np.swapaxes(probs, 2, 3), dout[sl])
        dp = np.matmul(dout[sl], np.swapaxes(v[sl], 2, 3))
        ds = probs * (dp - np.sum(dp * probs, axis=3, keepdims=True))
        dq[sl] = np.matmul(ds, k[sl]) * scale
        dk[sl] = np.matmul(np.swapaxes(ds, 2, 3), q[sl]) * scale
    return dq, dk, dv


def adam_step(p, g, m, v, t, lr, beta1, beta2, eps):
    """Bias-corrected Adam update, in place on p/m/v."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def embedding_grad(ids, dvec, table_grad):
    """Scatter-add rows of dvec [N, D] into table_grad at ids [N]."""
    np.add.at(table_grad, ids, dvec)
