"""Dense double-precision kernels with a fixed accumulation order.

Every matrix product in the package routes through :func:`matmul` so that
results are bit-identical across runs and across thread counts: ``np.einsum``
with ``optimize=False`` runs the plain single-threaded C loop and never
dispatches to a threaded BLAS.

``-inf`` is used as an exact sentinel for "no mass": in running logsumexp
accumulators before the first merge and in masked attention scores. The
helpers here keep that sentinel exact (``lse_merge(-inf, x) == x``) instead of
approximating it with a large negative constant.
"""

from __future__ import annotations

import numpy as np

NEG_INF = float("-inf")


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {out.shape}")
    return out


def as_vector(a, name: str = "vector") -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {out.shape}")
    return out


def matmul(a, b) -> np.ndarray:
    """Exact dense product a @ b with deterministic accumulation order."""
    a = as_matrix(a, "matmul operand a")
    b = as_matrix(b, "matmul operand b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: a is {a.shape[0]}x{a.shape[1]}, "
            f"b is {b.shape[0]}x{b.shape[1]}"
        )
    # optimize=False keeps einsum on its sequential C path (no BLAS threads).
    return np.einsum("ik,kj->ij", a, b, optimize=False)


def row_logsumexp(s) -> np.ndarray:
    """Per-row log(sum(exp(row))) with max-subtraction; all -inf rows give -inf."""
    s = as_matrix(s, "row_logsumexp input")
    if s.size == 0:
        raise ValueError("row_logsumexp requires a nonempty matrix")
    m = np.max(s, axis=1)
    out = np.full(s.shape[0], NEG_INF)
    ok = m != NEG_INF
    if np.any(ok):
        shifted = s[ok] - m[ok, None]  # -inf entries become -inf, exp gives 0
        out[ok] = m[ok] + np.log(np.sum(np.exp(shifted), axis=1))
    return out


def lse_merge(a, b) -> np.ndarray:
    """Elementwise stable log(exp(a) + exp(b)); -inf acts as the identity."""
    a = as_vector(a, "lse_merge operand a")
    b = as_vector(b, "lse_merge operand b")
    if a.shape != b.shape:
        raise ValueError(f"lse_merge length mismatch: {a.shape[0]} vs {b.shape[0]}")
    # np.logaddexp handles the -inf identity and -inf/-inf cases exactly.
    return np.logaddexp(a, b)


def row_softmax(s) -> np.ndarray:
    """Row-wise softmax computed as exp(s - row_logsumexp(s)).

    Rows that are entirely -inf have no distribution to normalize and are an
    error at this level; callers that allow empty rows handle them earlier.
    """
    s = as_matrix(s, "row_softmax input")
    lse = row_logsumexp(s)
    if np.any(lse == NEG_INF):
        bad = int(np.nonzero(lse == NEG_INF)[0][0])
        raise ValueError(f"row_softmax: row {bad} is fully masked (all -inf)")
    return np.exp(s - lse[:, None])


def rowsum_hadamard(a, b) -> np.ndarray:
    """out[i] = sum_j a[i,j] * b[i,j]."""
    a = as_matrix(a, "rowsum_hadamard operand a")
    b = as_matrix(b, "rowsum_hadamard operand b")
    if a.shape != b.shape:
        raise ValueError(f"rowsum_hadamard shape mismatch: {a.shape} vs {b.shape}")
    return np.einsum("ij,ij->i", a, b, optimize=False)


def seeded_random_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """Deterministic matrix with entries uniform in [-1, 1] (PCG64 generator)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(rows, cols))


def exp_shifted(s: np.ndarray, lse: np.ndarray) -> np.ndarray:
    """exp(s - lse[:, None]) where rows with lse == -inf yield exact zeros."""
    out = np.zeros_like(s)
    ok = lse != NEG_INF
    if np.any(ok):
        out[ok] = np.exp(s[ok] - lse[ok, None])
    return out


def exp_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise exp(a - b) with the convention exp(-inf - anything) == 0."""
    out = np.zeros_like(a)
    ok = a != NEG_INF
    if np.any(ok):
        out[ok] = np.exp(a[ok] - b[ok])
    return out
