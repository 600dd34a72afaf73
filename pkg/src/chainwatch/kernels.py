"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The streaming engine calls two kernels once per instruction: the fused
three-layer forward pass and cosine similarity.  Both exist in two
implementations with identical signatures:

* ``*_numpy``: vectorized numpy, always available.
* ``*_numba``: ``@njit``-compiled loops, present when numba imports.

The module-level names ``mlp_forward`` and ``cosine`` point at the active
implementation.  Selection: numba when installed, unless the environment
variable ``CHAINWATCH_BACKEND`` is set to ``numpy``.  ``CHAINWATCH_BACKEND=numba``
with numba missing falls back to numpy.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False


def _backend_choice() -> str:
    want = os.environ.get("CHAINWATCH_BACKEND", "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"CHAINWATCH_BACKEND must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and not HAS_NUMBA:
        return "numpy"
    return want


def _sigmoid_stable(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mlp_forward_numpy(x, w1, b1, w2, b2, w3, b3):
    """relu(W1 x + b1) -> relu(W2 . + b2) -> logistic(W3 . + b3)."""
    h1 = np.maximum(w1 @ x + b1, 0.0)
    h2 = np.maximum(w2 @ h1 + b2, 0.0)
    return _sigmoid_stable(w3 @ h2 + b3)


def cosine_numpy(a, b) -> float:
    """Cosine similarity; either operand with zero norm yields 0.0."""
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    sim = float(a @ b) / (float(na) * float(nb))
    return min(1.0, max(-1.0, sim))


def _mlp_forward_loops(x, w1, b1, w2, b2, w3, b3):
    n1 = w1.shape[0]
    n2 = w2.shape[0]
    n3 = w3.shape[0]
    d = x.shape[0]
    h1 = np.empty(n1)
    for i in range(n1):
        s = b1[i]
        for j in range(d):
            s += w1[i, j] * x[j]
        h1[i] = s if s > 0.0 else 0.0
    h2 = np.empty(n2)
    for i in range(n2):
        s = b2[i]
        for j in range(n1):
            s += w2[i, j] * h1[j]
        h2[i] = s if s > 0.0 else 0.0
    y = np.empty(n3)
    for i in range(n3):
        s = b3[i]
        for j in range(n2):
            s += w3[i, j] * h2[j]
        if s >= 0.0:
            y[i] = 1.0 / (1.0 + np.exp(-s))
        else:
            e = np.exp(s)
            y[i] = e / (1.0 + e)
    return y


def _cosine_loops(a, b) -> float:
    dot = 0.0
    na = 0.0
    nb = 0.0
    for i in range(a.shape[0]):
        dot += a[i] * b[i]
        na += a[i] * a[i]
        nb += b[i] * b[i]
    if na == 0.0 or nb == 0.0:
        return 0.0
    sim = dot / np.sqrt(na * nb)
    if sim > 1.0:
        return 1.0
    if sim < -1.0:
        return -1.0
    return sim


if HAS_NUMBA:
    mlp_forward_numba = numba.njit(cache=True)(_mlp_forward_loops)
    cosine_numba = numba.njit(cache=True)(_cosine_loops)
else:  # pragma: no cover
    mlp_forward_numba = None
    cosine_numba = None

ACTIVE_BACKEND = _backend_choice()

if ACTIVE_BACKEND == "numba":
    mlp_forward = mlp_forward_numba
    cosine = cosine_numba
else:
    mlp_forward = mlp_forward_numpy
    cosine = cosine_numpy


def backends() -> dict[str, dict]:
    """Both implementations of each kernel, for agreement tests and benches."""
    table = {"numpy": {"mlp_forward": mlp_forward_numpy, "cosine": cosine_numpy}}
    if HAS_NUMBA:
        table["numba"] = {"mlp_forward": mlp_forward_numba, "cosine": cosine_numba}
    return table
