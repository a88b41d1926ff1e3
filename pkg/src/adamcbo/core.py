"""Particle ensembles, objectives, weighted consensus and random mini-batching.

An ensemble is an ``(N, d)`` float array of particle positions. Objectives
map a point in R^d to a scalar; vectorized objectives take an ``(n, d)``
array and return ``n`` values, which is what the optimizers use internally.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import NumericError, UsageError

__all__ = [
    "Objective",
    "as_objective",
    "check_ensemble",
    "consensus_point",
    "batched_consensus",
    "random_batches",
    "permutation_batches",
    "evaluate_batch",
    "make_streams",
    "uniform_ensemble",
]


@dataclass(frozen=True)
class Objective:
    """Scalar loss on R^d.

    Parameters
    ----------
    func : callable
        ``func(x) -> float`` for ``x`` of shape ``(dim,)``, or, when
        ``vectorized`` is true, ``func(X) -> ndarray`` for ``X`` of shape
        ``(n, dim)``.
    dim : int
        Dimension of the search space.
    vectorized : bool
        Whether ``func`` accepts a stack of points.
    """

    func: Callable
    dim: int
    vectorized: bool = False

    def __post_init__(self):
        if not callable(self.func):
            raise UsageError("func is not callable")
        if int(self.dim) < 1:
            raise UsageError(f"dim must be >= 1, got {self.dim}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.vectorized:
            return float(np.asarray(self.func(x[None, :]))[0])
        return float(self.func(x))

    def evaluate(self, X, workers=None):
        """Evaluate on the rows of ``X``; ``workers > 1`` fans out over threads."""
        X = np.asarray(X, dtype=float)
        if self.vectorized:
            return np.asarray(self.func(X), dtype=float).reshape(X.shape[0])
        if workers is not None and workers > 1 and X.shape[0] > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                vals = list(pool.map(self.func, X))
        else:
            vals = [self.func(x) for x in X]
        return np.asarray(vals, dtype=float)


def as_objective(func, dim, vectorized=False):
    if isinstance(func, Objective):
        if func.dim != dim:
            raise UsageError(f"objective has dim {func.dim}, expected {dim}")
        return func
    return Objective(func, int(dim), vectorized)


def check_ensemble(X, dim=None):
    """Validate an ensemble and return it as a float64 ``(N, d)`` array."""
    X = np.array(X, dtype=float, copy=True)
    if X.ndim != 2:
        raise UsageError(f"ensemble must be 2-D (N, d), got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise UsageError(f"ensemble needs N >= 1 and d >= 1, got {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise UsageError(f"ensemble dimension {X.shape[1]} != objective dimension {dim}")
    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        raise NumericError("non-finite particle position", index=int(np.flatnonzero(bad)[0]))
    return X


def consensus_point(X, fvals, alpha, batch=None):
    """Weighted average of particles with weights ``exp(-alpha * f)``.

    The exponent is shifted by the batch minimum so the largest weight is
    exactly one; the result is unchanged mathematically and cannot overflow.

    Parameters
    ----------
    X : array_like, shape (N, d)
        Particle positions.
    fvals : array_like
        Objective values, one per member of ``batch`` (or per row of ``X``
        when ``batch`` is None).
    alpha : float
        Weight sharpness, > 0.
    batch : array_like of int, optional
        Indices into ``X`` selecting the batch.

    Returns
    -------
    ndarray, shape (d,)
    """
    X = np.asarray(X, dtype=float)
    if batch is not None:
        X = X[np.asarray(batch, dtype=np.intp)]
    fvals = np.asarray(fvals, dtype=float).reshape(-1)
    if X.shape[0] == 0:
        raise UsageError("consensus of an empty batch")
    if fvals.shape[0] != X.shape[0]:
        raise UsageError(f"{fvals.shape[0]} objective values for {X.shape[0]} particles")
    if not alpha > 0:
        raise UsageError(f"alpha must be > 0, got {alpha}")
    bad = ~np.isfinite(fvals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        if batch is not None:
            i = int(np.asarray(batch)[i])
        raise NumericError(f"non-finite objective value at particle {i}", index=i)
    w = np.exp(-alpha * (fvals - fvals.min()))
    total = w.sum()
    assert total >= 1.0
    return (w @ X) / total


def batched_consensus(Xb, fb, alpha):
    """Consensus points for a stack of equally sized batches.

    ``Xb`` has shape ``(n_batches, M, d)`` and ``fb`` shape ``(n_batches, M)``.
    Returns ``(n_batches, d)``. Finiteness of ``fb`` is the caller's job.
    """
    w = np.exp(-alpha * (fb - fb.min(axis=1, keepdims=True)))
    return np.einsum("bm,bmd->bd", w, Xb) / w.sum(axis=1)[:, None]


def permutation_batches(n_particles, batch_size, rng, allow_remainder=False):
    """Random permutation of ``range(N)`` plus the number of full batches.

    Returns ``(perm, n_full)``; ``perm[: n_full * M]`` reshapes into the
    full batches and ``perm[n_full * M:]`` is the remainder batch (empty when
    ``M`` divides ``N``).
    """
    n_particles = int(n_particles)
    batch_size = int(batch_size)
    if batch_size < 1 or n_particles < 1:
        raise UsageError(f"need N >= 1 and M >= 1, got N={n_particles}, M={batch_size}")
    if batch_size > n_particles:
        raise UsageError(f"batch size {batch_size} exceeds particle count {n_particles}")
    if n_particles % batch_size and not allow_remainder:
        raise UsageError(f"batch size {batch_size} does not divide particle count {n_particles}")
    perm = rng.permutation(n_particles)
    return perm, n_particles // batch_size


def random_batches(n_particles, batch_size, rng, allow_remainder=False):
    """Partition ``range(N)`` into random batches of size ``M``.

    With ``allow_remainder`` a final short batch holds the ``N mod M``
    leftover indices; otherwise ``M`` must divide ``N``.
    """
    perm, n_full = permutation_batches(n_particles, batch_size, rng, allow_remainder)
    batches = list(perm[: n_full * batch_size].reshape(n_full, batch_size))
    if n_full * batch_size < n_particles:
        batches.append(perm[n_full * batch_size:])
    return batches


def evaluate_batch(obj, X, batch=None, workers=None):
    """Objective values at ``X[batch]``; raises :class:`NumericError` on NaN/inf."""
    X = np.asarray(X, dtype=float)
    idx = None
    if batch is not None:
        idx = np.asarray(batch, dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= X.shape[0]):
            raise UsageError("batch index out of range")
        X = X[idx]
    vals = obj.evaluate(X, workers=workers)
    if np.isfinite(vals).all():
        return vals
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        if idx is not None:
            i = int(idx[i])
        raise NumericError(f"objective returned {vals[bad][0]} at particle {i}", index=i)
    return vals


def make_streams(seed, names=("init", "permutation", "noise")):
    """Independent generators, one per purpose, derived from one master seed."""
    if isinstance(seed, np.random.Generator):
        return dict(zip(names, seed.spawn(len(names))))
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(s) for name, s in zip(names, children)}


def uniform_ensemble(n_particles, dim, low, high, rng):
    return rng.uniform(low, high, size=(int(n_particles), int(dim)))
