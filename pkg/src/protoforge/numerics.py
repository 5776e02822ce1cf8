"""Dense-array kernels shared by the whole stack.

Values are stored as float32; reductions accumulate in float64 so results are
reproducible across platforms. All functions are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Instrumentation for the refinement fast-path contract: the deletion path
# must never touch the distance kernel. Tests zero this and assert afterwards.
DISTANCE_MAP_CALLS = 0


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes; message carries both shapes."""


class NonFiniteError(ValueError):
    """A value that must be finite is NaN or Inf."""


@dataclass(frozen=True)
class SimilarityConfig:
    """Stabilizer for the log-ratio similarity. Must satisfy 0 < epsilon < 1."""

    epsilon: float = 1e-4

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")


def distance_map(latent: np.ndarray, proto: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance of every spatial cell of `latent` to `proto`.

    latent: (H', W', D) grid, proto: (D,). Returns an (H', W') float64 grid.
    """
    global DISTANCE_MAP_CALLS
    latent = np.asarray(latent)
    proto = np.asarray(proto)
    if latent.ndim != 3 or proto.ndim != 1 or latent.shape[2] != proto.shape[0]:
        raise ShapeMismatchError(
            f"latent shape {latent.shape} incompatible with prototype shape {proto.shape}"
        )
    DISTANCE_MAP_CALLS += 1
    diff = latent.astype(np.float64) - proto.astype(np.float64)
    out = np.einsum("hwd,hwd->hw", diff, diff)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("distance_map produced non-finite values")
    return out


def similarity(d, cfg: SimilarityConfig = SimilarityConfig()):
    """Log-ratio similarity sim(d) = ln((d+1)/(d+eps)).

    Strictly decreasing in d, sim(0) = -ln(eps), sim(d) -> 0 as d -> inf.
    Accepts scalars or arrays of non-negative squared distances.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("similarity requires non-negative squared distances")
    return np.log((d + 1.0) / (d + cfg.epsilon))


def similarity_grad(d, cfg: SimilarityConfig = SimilarityConfig()):
    """d/dd of similarity: 1/(d+1) - 1/(d+eps). Always negative."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("similarity_grad requires non-negative squared distances")
    return 1.0 / (d + 1.0) - 1.0 / (d + cfg.epsilon)


def inverse_similarity(s, cfg: SimilarityConfig = SimilarityConfig()):
    """Recover the squared distance from a similarity score.

    Exact inverse of `similarity`: d = (1 - eps*e^s) / (e^s - 1), clamped at 0
    to absorb rounding at the sim(0) end.
    """
    s = np.asarray(s, dtype=np.float64)
    es = np.exp(s)
    d = (1.0 - cfg.epsilon * es) / (es - 1.0)
    return np.maximum(d, 0.0)


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-3
) -> np.ndarray:
    """Central-difference gradient of a scalar function, used as a test oracle.

    Perturbs each coordinate in float64. Rejects non-finite function values.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"function non-finite at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
