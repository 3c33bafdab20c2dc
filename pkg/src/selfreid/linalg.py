"""Vector and matrix primitives shared by the whole pipeline.

All representations live on the unit sphere: vectors are L2-normalized
immediately after creation so that dot products and cosine similarities
coincide. Everything is float64.
"""

import numpy as np

from .errors import DegenerateVector, DimensionMismatch, InvalidTemperature

# Norm below this is treated as a zero vector.
ZERO_NORM_TOL = 1e-300


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm, preserving direction."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm <= ZERO_NORM_TOL:
        raise DegenerateVector(f"cannot normalize vector with norm {norm}")
    return v / norm


def normalize_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise l2_normalize of a feature matrix."""
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if not np.all(np.isfinite(norms)) or np.any(norms <= ZERO_NORM_TOL):
        raise DegenerateVector("matrix contains a zero or non-finite row")
    return mat / norms


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors (== cosine similarity)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    return float(a @ b)


def pairwise_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity matrix between two stacks of unit vectors.

    Rows of `a` and `b` must already be unit-normalized; entry (i, j) is
    then cosine(a[i], b[j]).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    return a @ b.T


def softmax_row(sims: np.ndarray, temperature: float) -> np.ndarray:
    """Temperature-scaled softmax of a similarity vector.

    Uses max-subtraction: temperatures as low as 0.07 push logits to
    +/-14, where naive exponentiation starts losing precision.
    """
    if temperature <= 0:
        raise InvalidTemperature(f"temperature must be > 0, got {temperature}")
    sims = np.asarray(sims, dtype=np.float64)
    if sims.size == 0:
        raise DimensionMismatch("empty similarity vector")
    logits = sims / temperature
    logits = logits - logits.max()
    e = np.exp(logits)
    return e / e.sum()


def softmax_rows(sims: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax_row over a similarity matrix."""
    if temperature <= 0:
        raise InvalidTemperature(f"temperature must be > 0, got {temperature}")
    sims = np.asarray(sims, dtype=np.float64)
    logits = sims / temperature
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)
