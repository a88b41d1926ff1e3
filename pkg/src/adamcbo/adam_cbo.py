"""Consensus-based optimization with adaptive moment estimation (Adam-CBO).

Every particle keeps exponential moving averages of its deviation from the
consensus point of its current batch (first moment) and of the squared
deviation (second moment). The drift is the bias-corrected first moment
normalized by the root of the bias-corrected second moment, and the noise is
additive, isotropic and decays geometrically:

    m <- b1 m + (1 - b1) (X - x*)
    v <- b2 v + (1 - b2) (X - x*)**2
    X <- X - lam * m_hat / (sqrt(v_hat) + eps) + sigma_t * z
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .cbo import (
    RunResult,
    batch_consensus_all,
    check_positions,
    global_consensus,
    trace_row,
)
from .core import (
    Objective,
    as_objective,
    check_ensemble,
    evaluate_batch,
    make_streams,
    permutation_batches,
    uniform_ensemble,
)
from .exceptions import UsageError
from .schedules import NoiseProcess, PhasePlan, SigmaSchedule, phase_at

__all__ = [
    "AdamCboParams",
    "MomentState",
    "update_moments",
    "bias_correct",
    "adam_cbo_iteration",
    "run_adam_cbo",
    "AdamCBO",
]


@dataclass(frozen=True)
class AdamCboParams:
    lam: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    alpha: float = 1e3
    n_particles: int = 500
    batch_size: int = 5
    max_iter: int = 6000
    noise: NoiseProcess = field(default_factory=NoiseProcess)
    sigma_schedule: SigmaSchedule = field(default_factory=SigmaSchedule)
    phase_plan: PhasePlan | None = None
    stop_tol: float | None = None

    def __post_init__(self):
        if not isinstance(self.noise, NoiseProcess):
            object.__setattr__(self, "noise", NoiseProcess(str(self.noise)))
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise UsageError(f"beta1, beta2 must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0:
            raise UsageError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.lam > 0 or not self.alpha > 0:
            raise UsageError("lam and alpha must be > 0")
        if self.n_particles < 1 or self.batch_size < 1:
            raise UsageError("n_particles and batch_size must be >= 1")
        if self.max_iter < 0:
            raise UsageError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.phase_plan is not None:
            for ph in self.phase_plan.phases:
                if ph.batch_size is not None and ph.batch_size > self.n_particles:
                    raise UsageError(f"phase batch size {ph.batch_size} > n_particles {self.n_particles}")
        elif self.batch_size > self.n_particles:
            raise UsageError(f"batch_size {self.batch_size} > n_particles {self.n_particles}")

    @property
    def total_iter(self):
        return self.phase_plan.total if self.phase_plan is not None else self.max_iter

    def phase(self, t):
        """Effective ``(lam, batch_size, noise_enabled, sigma_schedule)`` at iteration ``t``."""
        if self.phase_plan is None:
            return self.lam, self.batch_size, True, self.sigma_schedule
        ph = phase_at(self.phase_plan, t)
        return (
            self.lam if ph.lam is None else ph.lam,
            self.batch_size if ph.batch_size is None else ph.batch_size,
            ph.noise_enabled,
            self.sigma_schedule if ph.sigma is None else ph.sigma,
        )


@dataclass
class MomentState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n_particles, dim):
        return cls(np.zeros((n_particles, dim)), np.zeros((n_particles, dim)), 0)


def update_moments(deviation, m, v, beta1, beta2):
    """Exponential moving averages of the deviation and its elementwise square."""
    deviation = np.asarray(deviation, dtype=float)
    m_new = np.multiply(m, beta1, dtype=float)
    m_new += (1.0 - beta1) * deviation
    v_new = np.multiply(deviation, 1.0 - beta2)
    v_new *= deviation
    v_new += np.multiply(v, beta2, dtype=float)
    return m_new, v_new


def bias_correct(m, v, t, beta1, beta2):
    """``m / (1 - beta1**t)`` and ``v / (1 - beta2**t)``; ``t`` counts updates, so t >= 1."""
    if t < 1:
        raise UsageError(f"bias correction needs t >= 1, got {t}")
    return np.asarray(m) / (1.0 - beta1**t), np.asarray(v) / (1.0 - beta2**t)


def _step(X, moments, obj, params, rng, noise_rng, perm, noise, workers):
    t = moments.step
    N, d = X.shape
    lam, batch_size, noise_on, schedule = params.phase(t)
    if perm is None:
        perm, n_full = permutation_batches(N, batch_size, rng, allow_remainder=True)
    else:
        perm = np.asarray(perm, dtype=np.intp)
        n_full = N // batch_size
    fvals = evaluate_batch(obj, X, workers=workers)
    dev = X - batch_consensus_all(X, fvals, perm, n_full, batch_size, params.alpha)
    b1, b2 = params.beta1, params.beta2
    m, v = update_moments(dev, moments.m, moments.v, b1, b2)
    # lam * m_hat / (sqrt(v_hat) + eps), in place to spare large temporaries
    step = np.divide(m, 1.0 - b1 ** (t + 1))
    step *= lam
    den = np.divide(v, 1.0 - b2 ** (t + 1))
    np.sqrt(den, out=den)
    den += params.epsilon
    step /= den
    X_new = np.subtract(X, step, out=step)
    if noise_on:
        if noise is None:
            noise = params.noise.sample((N, d), noise_rng, dt=1.0)
            noise *= schedule(t)
        else:
            noise = schedule(t) * np.asarray(noise, dtype=float)
        X_new += noise
    check_positions(X_new, t)
    return X_new, MomentState(m, v, t + 1), fvals


def adam_cbo_iteration(X, moments, obj, params, rng, *, noise_rng=None, perm=None, noise=None, workers=None):
    """One outer Adam-CBO iteration at step ``moments.step``.

    Returns ``(X_new, moments_new)``. ``perm`` and ``noise`` replay a recorded
    permutation and ``(N, d)`` noise tape instead of drawing from ``rng``.
    """
    X = check_ensemble(X)
    obj = as_objective(obj, X.shape[1])
    if moments.m.shape != X.shape or moments.v.shape != X.shape:
        raise UsageError("moment state shape does not match the ensemble")
    X_new, state, _ = _step(X, moments, obj, params, rng, noise_rng or rng, perm, noise, workers)
    return X_new, state


def run_adam_cbo(obj, init, params, rng=None, *, workers=None, trace_every=0, callback=None):
    """Full Adam-CBO loop over ``params.total_iter`` iterations, honoring the phase plan."""
    X = check_ensemble(init)
    if X.shape[0] != params.n_particles:
        raise UsageError(f"init has {X.shape[0]} particles, params expect {params.n_particles}")
    obj = as_objective(obj, X.shape[1])
    streams = make_streams(rng, ("permutation", "noise"))
    moments = MomentState.zeros(*X.shape)
    trace = []
    while moments.step < params.total_iter:
        t = moments.step
        X_new, moments, fvals = _step(
            X, moments, obj, params, streams["permutation"], streams["noise"], None, None, workers
        )
        if trace_every and t % trace_every == 0:
            trace.append(trace_row(t, X, fvals, params.alpha))
        X = X_new
        if callback is not None:
            callback(moments.step, X)
        if params.stop_tol is not None:
            xs, _ = global_consensus(X, obj, params.alpha, workers)
            if np.abs(X - xs).max() < params.stop_tol:
                break
    xs, _ = global_consensus(X, obj, params.alpha, workers)
    return RunResult(ensemble=X, x_star=xs, f_star=obj(xs), n_iter=moments.step, trace=trace)


class AdamCBO(BaseEstimator):
    """Adam-CBO optimizer with a scikit-learn style parameter API.

    ``phases`` is an optional sequence of :class:`~adamcbo.schedules.Phase`
    that replaces ``max_iter`` with the plan length.
    """

    def __init__(
        self,
        lam=0.1,
        beta1=0.9,
        beta2=0.99,
        epsilon=1e-8,
        alpha=1e3,
        n_particles=500,
        batch_size=5,
        max_iter=6000,
        noise="gaussian",
        sigma_base=0.99,
        sigma_period=20.0,
        phases=None,
        stop_tol=None,
        init_low=-3.0,
        init_high=3.0,
        trace_every=0,
        workers=None,
        random_state=None,
    ):
        self.lam = lam
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.alpha = alpha
        self.n_particles = n_particles
        self.batch_size = batch_size
        self.max_iter = max_iter
        self.noise = noise
        self.sigma_base = sigma_base
        self.sigma_period = sigma_period
        self.phases = phases
        self.stop_tol = stop_tol
        self.init_low = init_low
        self.init_high = init_high
        self.trace_every = trace_every
        self.workers = workers
        self.random_state = random_state

    def to_params(self):
        plan = None
        if self.phases is not None:
            plan = self.phases if isinstance(self.phases, PhasePlan) else PhasePlan(tuple(self.phases))
        return AdamCboParams(
            lam=self.lam,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            alpha=self.alpha,
            n_particles=self.n_particles,
            batch_size=self.batch_size,
            max_iter=self.max_iter,
            noise=NoiseProcess(self.noise),
            sigma_schedule=SigmaSchedule(self.sigma_base, self.sigma_period),
            phase_plan=plan,
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
        res = run_adam_cbo(
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

