"""Mini-batched consensus-based optimization with component-wise noise.

Each iteration draws a random partition of the particles into batches of
size ``M``; every batch computes its own consensus point from its members'
current positions and each member moves by

    X <- X - lam * gamma * (X - x*) + sigma * sqrt(gamma) * z * (X - x*)

with ``z`` drawn i.i.d. per component. Batches are disjoint and only read
their own members, so the whole sweep is evaluated as one vectorized step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .core import (
    Objective,
    as_objective,
    batched_consensus,
    check_ensemble,
    consensus_point,
    evaluate_batch,
    make_streams,
    permutation_batches,
    uniform_ensemble,
)
from .exceptions import NumericError, UsageError
from .schedules import NoiseProcess

__all__ = ["CboParams", "RunResult", "TraceRow", "cbo_iteration", "run_cbo", "CBO"]


@dataclass(frozen=True)
class CboParams:
    lam: float = 1.0
    gamma: float = 0.01
    sigma: float = 5.1
    alpha: float = 1e3
    n_particles: int = 50
    batch_size: int = 40
    max_iter: int = 2000
    noise: NoiseProcess = field(default_factory=NoiseProcess)
    stop_tol: float | None = None

    def __post_init__(self):
        if not isinstance(self.noise, NoiseProcess):
            object.__setattr__(self, "noise", NoiseProcess(str(self.noise)))
        for name in ("lam", "gamma", "alpha"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.sigma >= 0:
            raise UsageError(f"sigma must be >= 0, got {self.sigma}")
        if self.n_particles < 1 or self.batch_size < 1:
            raise UsageError("n_particles and batch_size must be >= 1")
        if self.batch_size > self.n_particles:
            raise UsageError(f"batch_size {self.batch_size} > n_particles {self.n_particles}")
        if self.max_iter < 0:
            raise UsageError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.stop_tol is not None and not self.stop_tol > 0:
            raise UsageError(f"stop_tol must be > 0, got {self.stop_tol}")


@dataclass
class TraceRow:
    iteration: int
    x_star: np.ndarray
    best_f: float
    diameter: float

    def as_dict(self):
        return {
            "iteration": self.iteration,
            "x_star": self.x_star.tolist(),
            "best_f": self.best_f,
            "diameter": self.diameter,
        }


@dataclass
class RunResult:
    ensemble: np.ndarray
    x_star: np.ndarray
    f_star: float
    n_iter: int
    trace: list = field(default_factory=list)


def batch_consensus_all(X, fvals, perm, n_full, batch_size, alpha):
    """Per-particle consensus point: row ``i`` holds the x* of ``i``'s batch."""
    xstar = np.empty_like(X)
    cut = n_full * batch_size
    if n_full:
        full = perm[:cut].reshape(n_full, batch_size)
        centers = batched_consensus(X[full], fvals[full], alpha)
        xstar[full] = centers[:, None, :]
    rest = perm[cut:]
    if rest.size:
        xstar[rest] = batched_consensus(X[rest][None], fvals[rest][None], alpha)[0]
    return xstar


def check_positions(X, iteration):
    if np.isfinite(X).all():
        return
    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericError(
            f"non-finite position for particle {i} at iteration {iteration}",
            index=i,
            iteration=iteration,
        )


def _step(X, obj, params, rng, noise_rng, perm, noise, workers, iteration):
    N, d = X.shape
    if perm is None:
        perm, n_full = permutation_batches(N, params.batch_size, rng, allow_remainder=True)
    else:
        perm = np.asarray(perm, dtype=np.intp)
        n_full = N // params.batch_size
    fvals = evaluate_batch(obj, X, workers=workers)
    dev = X - batch_consensus_all(X, fvals, perm, n_full, params.batch_size, params.alpha)
    X_new = X - params.lam * params.gamma * dev
    if params.sigma > 0:
        if noise is None:
            noise = params.noise.sample((N, d), noise_rng, dt=params.gamma)
        X_new += params.sigma * np.sqrt(params.gamma) * noise * dev
    check_positions(X_new, iteration)
    return X_new, fvals


def cbo_iteration(X, obj, params, rng, *, noise_rng=None, perm=None, noise=None, workers=None, iteration=0):
    """One outer CBO iteration; returns the updated ensemble.

    Parameters
    ----------
    X : ndarray, shape (N, d)
    obj : Objective
    params : CboParams
    rng : numpy.random.Generator
        Drives the batch permutation, and the noise unless ``noise_rng`` is given.
    perm, noise : ndarray, optional
        Recorded permutation of ``range(N)`` and ``(N, d)`` noise tape (row
        ``i`` belongs to particle ``i``). Replaces the random draws.
    """
    X = check_ensemble(X)
    obj = as_objective(obj, X.shape[1])
    return _step(X, obj, params, rng, noise_rng or rng, perm, noise, workers, iteration)[0]


def trace_row(t, X, fvals, alpha):
    return TraceRow(
        iteration=t,
        x_star=consensus_point(X, fvals, alpha),
        best_f=float(fvals.min()),
        diameter=float(np.ptp(X, axis=0).max()),
    )


def global_consensus(X, obj, alpha, workers=None):
    fvals = evaluate_batch(obj, X, workers=workers)
    xs = consensus_point(X, fvals, alpha)
    return xs, fvals


def run_cbo(obj, init, params, rng=None, *, workers=None, trace_every=0, callback=None):
    """Iterate CBO until ``max_iter`` or the early-stopping criterion.

    Stops early when ``max_i ||X_i - x*||_inf < stop_tol`` with x* taken over
    the full ensemble. The returned x* is recomputed over all particles.
    """
    X = check_ensemble(init)
    if X.shape[0] != params.n_particles:
        raise UsageError(f"init has {X.shape[0]} particles, params expect {params.n_particles}")
    obj = as_objective(obj, X.shape[1])
    streams = make_streams(rng, ("permutation", "noise"))
    trace = []
    t = 0
    while t < params.max_iter:
        X_new, fvals = _step(X, obj, params, streams["permutation"], streams["noise"], None, None, workers, t)
        if trace_every and t % trace_every == 0:
            trace.append(trace_row(t, X, fvals, params.alpha))
        X = X_new
        t += 1
        if callback is not None:
            callback(t, X)
        if params.stop_tol is not None:
            xs, _ = global_consensus(X, obj, params.alpha, workers)
            if np.abs(X - xs).max() < params.stop_tol:
                break
    xs, fvals = global_consensus(X, obj, params.alpha, workers)
    return RunResult(ensemble=X, x_star=xs, f_star=obj(xs), n_iter=t, trace=trace)


class CBO(BaseEstimator):
    """Consensus-based optimizer with a scikit-learn style parameter API.

    Parameters mirror :class:`CboParams`; ``init_low``/``init_high`` bound the
    uniform initial ensemble when ``minimize`` is not given one.

    Examples
    --------
    >>> import numpy as np
    >>> opt = CBO(max_iter=500, random_state=0)
    >>> opt.minimize(lambda x: float(np.sum((x - 1.0) ** 2)), dim=2).x_.round(1)
    array([1., 1.])
    """

    def __init__(
        self,
        lam=1.0,
        gamma=0.01,
        sigma=5.1,
        alpha=1e3,
        n_particles=50,
        batch_size=40,
        max_iter=2000,
        noise="gaussian",
        stop_tol=None,
        init_low=-3.0,
        init_high=3.0,
        trace_every=0,
        workers=None,
        random_state=None,
    ):
        self.lam = lam
        self.gamma = gamma
        self.sigma = sigma
        self.alpha = alpha
        self.n_particles = n_particles
        self.batch_size = batch_size
        self.max_iter = max_iter
        self.noise = noise
        self.stop_tol = stop_tol
        self.init_low = init_low
        self.init_high = init_high
        self.trace_every = trace_every
        self.workers = workers
        self.random_state = random_state

    def to_params(self):
        return CboParams(
            lam=self.lam,
            gamma=self.gamma,
            sigma=self.sigma,
            alpha=self.alpha,
            n_particles=self.n_particles,
            batch_size=self.batch_size,
            max_iter=self.max_iter,
            noise=NoiseProcess(self.noise),
            stop_tol=self.stop_tol,
        )

    def minimize(self, func, dim=None, init=None, vectorized=False):
        """Minimize ``func``; sets ``x_``, ``fun_``, ``n_iter_``, ``ensemble_``, ``trace_``."""
        params = self.to_params()
        streams = make_streams(self.random_state, ("init", "run"))
        if dim is None and isinstance(func, Objective):
            dim = func.dim
        if init is None:
            if dim is None:
                raise UsageError("give either dim or an initial ensemble")
            init = uniform_ensemble(params.n_particles, dim, self.init_low, self.init_high, streams["init"])
        init = check_ensemble(init, dim)
        res = run_cbo(
            as_objective(func, init.shape[1], vectorized),
            init,
            params,
            streams["run"],
            workers=self.workers,
            trace_every=self.trace_every,
        )
        self.x_ = res.x_star
        self.fun_ = res.f_star
        self.n_iter_ = res.n_iter
        self.ensemble_ = res.ensemble
        self.trace_ = res.trace
        return self
