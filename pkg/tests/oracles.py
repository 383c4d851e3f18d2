"""Independent oracles used to derive expected test values.

Everything here is deliberately naive and kept apart from the library code
paths it checks: central finite differences for gradients, a plain-numpy
attention/layer-norm forward, Levenshtein distance, and a mean-patch
predictor baseline.
"""

import numpy as np


def finite_difference_grads(f, arrays, eps=1e-3):
    """Central-difference gradients of scalar f(list-of-arrays) w.r.t. each array.

    Arrays are perturbed in float64 one element at a time; f must be pure.
    """
    arrays = [np.asarray(a, dtype=np.float64).copy() for a in arrays]
    grads = [np.zeros_like(a) for a in arrays]
    for ai, a in enumerate(arrays):
        flat = a.reshape(-1)
        gflat = grads[ai].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f(arrays)
            flat[i] = orig - eps
            lo = f(arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
    return grads


def max_relative_error(analytic, numeric, floor=1.0):
    """max |a - n| / max(floor, |n|) over all elements of all arrays."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        denom = np.maximum(floor, np.abs(n))
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def reference_softmax(x, valid=None):
    x = np.asarray(x, dtype=np.float64)
    if valid is None:
        valid = x.shape[-1]
    sub = x[..., :valid]
    e = np.exp(sub - sub.max(axis=-1, keepdims=True))
    out = np.zeros_like(x)
    out[..., :valid] = e / e.sum(axis=-1, keepdims=True)
    return out


def reference_attention(x, wq, bq, wk, bk, wv, bv, wo, bo, heads, valid=None):
    """Loop-over-heads attention forward in plain numpy, float64."""
    x = np.asarray(x, dtype=np.float64)
    seq, width = x.shape
    dh = width // heads
    q = x @ wq + bq
    k = x @ wk + bk
    v = x @ wv + bv
    ctx = np.zeros((seq, width))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = (q[:, sl] @ k[:, sl].T) / np.sqrt(dh)
        probs = reference_softmax(scores, valid)
        ctx[:, sl] = probs @ v[:, sl]
    out = ctx @ wo + bo
    if valid is not None and valid < seq:
        out[valid:] = 0.0
    return out


def reference_layer_norm(x, gamma, beta, eps):
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def levenshtein(a, b):
    """Plain O(len(a)*len(b)) edit distance over codepoints."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def mean_patch_predictor(train_patches):
    """Predict every patch as the mean normalized training patch."""
    stack = np.asarray(train_patches, dtype=np.float64)
    return stack.mean(axis=0)
