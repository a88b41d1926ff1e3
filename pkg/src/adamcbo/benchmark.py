"""Rastrigin benchmark: objective family, success-rate trials and cost scaling."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .adam_cbo import AdamCboParams, run_adam_cbo
from .cbo import CboParams, run_cbo
from .core import Objective, make_streams
from .exceptions import NumericError, UsageError
from .schedules import NoiseProcess, SigmaSchedule

__all__ = [
    "RastriginSpec",
    "rastrigin_eval",
    "rastrigin_objective",
    "count_local_minima",
    "TrialConfig",
    "SuccessReport",
    "run_success_trials",
    "ScalingReport",
    "scaling_probe",
    "reference_cbo_params",
    "reference_adam_params",
]


@dataclass(frozen=True)
class RastriginSpec:
    dim: int
    shift: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise UsageError(f"dim must be >= 1, got {self.dim}")


def rastrigin_eval(spec, x):
    """Dimension-averaged Rastrigin function, minimum ``offset`` at ``shift * 1``.

    Accepts a single point of shape ``(d,)`` or a stack ``(n, d)``.
    """
    y = np.subtract(x, spec.shift, dtype=float)
    sq = np.einsum("...i,...i->...", y, y)
    y *= 2.0 * np.pi
    cos = np.cos(y, out=y).sum(axis=-1)
    return (sq - 10.0 * cos) / spec.dim + (10.0 + spec.offset)


def rastrigin_objective(spec):
    return Objective(lambda X: rastrigin_eval(spec, X), spec.dim, vectorized=True)


def count_local_minima(d):
    """Reference local-minimum count ``5**d`` for zero shift on ``(-3, 3)**d``.

    This counts the minimizers near the integer lattice points ``-2..2`` in
    each coordinate. Strictly, the open box also holds the two minimizers
    near ``+-2.985``, which would give ``7**d``; the lattice count is kept.
    """
    if d < 1:
        raise UsageError(f"d must be >= 1, got {d}")
    return 5 ** int(d)


# CBO settings for each noise process.
_CBO_TABLE = {
    "gaussian": dict(lam=1.0, gamma=0.01, sigma=5.1),
    "uniform": dict(lam=0.01, gamma=0.1, sigma=3.0),
    "wiener": dict(lam=0.5, gamma=0.1, sigma=0.1),
}

# Success-rate protocol: CBO uses alpha=70 for 14000 iterations, Adam-CBO
# alpha=1000 for 10000 iterations.
CBO_DEFAULT_ALPHA = 70.0
CBO_DEFAULT_ITER = 14000
ADAM_DEFAULT_ITER = 10000


def reference_cbo_params(noise="gaussian", n_particles=50, batch_size=40, **overrides):
    kw = dict(_CBO_TABLE[noise], alpha=CBO_DEFAULT_ALPHA, n_particles=n_particles, batch_size=batch_size,
              max_iter=CBO_DEFAULT_ITER, noise=NoiseProcess(noise))
    kw.update(overrides)
    return CboParams(**kw)


def reference_adam_params(noise="gaussian", n_particles=500, batch_size=5, **overrides):
    kw = dict(lam=0.1, n_particles=n_particles, batch_size=batch_size, max_iter=ADAM_DEFAULT_ITER,
              noise=NoiseProcess(noise), sigma_schedule=SigmaSchedule(0.99, 20.0))
    kw.update(overrides)
    return AdamCboParams(**kw)


@dataclass(frozen=True)
class TrialConfig:
    """Protocol for a success-rate experiment.

    ``shift_range`` draws one scalar shift per trial (None keeps the problem's
    shift); ``init`` is ``"uniform"`` on ``init_box`` or ``"zeros"``.
    """

    params: CboParams | AdamCboParams
    n_trials: int = 100
    success_radius: float = 0.25
    init: str = "uniform"
    init_box: tuple = (-3.0, 3.0)
    shift_range: tuple | None = (-3.0, 3.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 1:
            raise UsageError(f"n_trials must be >= 1, got {self.n_trials}")
        if not 0 < self.success_radius < 0.5:
            raise UsageError(f"success radius must lie in (0, 0.5), got {self.success_radius}")
        if self.init not in ("uniform", "zeros"):
            raise UsageError(f"init must be 'uniform' or 'zeros', got {self.init!r}")
        if not isinstance(self.params, (CboParams, AdamCboParams)):
            raise UsageError("params must be CboParams or AdamCboParams")

    @property
    def optimizer(self):
        return "cbo" if isinstance(self.params, CboParams) else "adam_cbo"


@dataclass
class SuccessReport:
    successes: int
    trials: int
    x_stars: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def rate(self):
        return self.successes / self.trials


def _trial(cfg, spec, index, solver):
    streams = make_streams([cfg.seed, index], ("problem", "init", "run"))
    shift = spec.shift
    if cfg.shift_range is not None:
        shift = float(streams["problem"].uniform(*cfg.shift_range))
    tspec = replace(spec, shift=shift)
    n = cfg.params.n_particles
    if cfg.init == "zeros":
        init = np.zeros((n, spec.dim))
    else:
        init = streams["init"].uniform(*cfg.init_box, size=(n, spec.dim))
    try:
        if solver is not None:
            xs = np.asarray(solver(tspec, init, streams["run"]), dtype=float)
        elif cfg.optimizer == "cbo":
            xs = run_cbo(rastrigin_objective(tspec), init, cfg.params, streams["run"]).x_star
        else:
            xs = run_adam_cbo(rastrigin_objective(tspec), init, cfg.params, streams["run"]).x_star
    except NumericError as exc:
        return None, float("inf"), f"trial {index}: {exc}"
    return xs, float(np.abs(xs - shift).max()), None


def run_success_trials(cfg, spec, solver=None, workers=None):
    """Run ``cfg.n_trials`` seeded trials and count successes.

    A trial succeeds when the final consensus point lies within
    ``success_radius`` of the minimizer in the max-norm. Trial ``i`` draws
    its shift, initial ensemble and optimizer noise from ``(seed, i)`` only,
    so results do not depend on execution order. ``solver(spec, init, rng)``
    replaces the configured optimizer when given. Numeric failures count as
    unsuccessful trials and are listed in ``failures``.
    """
    t0 = time.perf_counter()
    idx = range(cfg.n_trials)
    if workers is not None and workers > 1 and solver is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_trial, [cfg] * cfg.n_trials, [spec] * cfg.n_trials, idx, [None] * cfg.n_trials))
    else:
        out = [_trial(cfg, spec, i, solver) for i in idx]
    report = SuccessReport(successes=0, trials=cfg.n_trials)
    for xs, dist, err in out:
        report.x_stars.append(xs)
        report.distances.append(dist)
        if err is not None:
            report.failures.append(err)
        elif dist < cfg.success_radius:
            report.successes += 1
    report.seconds = time.perf_counter() - t0
    return report


@dataclass
class ScalingReport:
    dims: list
    seconds_per_iter: list
    slope: float
    intercept: float
    r_squared: float


def scaling_probe(dims, n_particles=1000, batch_size=50, iterations=100, repeats=3, seed=0):
    """Mean wall time per Adam-CBO iteration on Rastrigin for each dimension.

    Each dimension is timed ``repeats`` times and the fastest run kept; a
    least-squares line of time against dimension is reported with its R^2.
    """
    if iterations < 1:
        raise UsageError("iterations must be >= 1")
    dims = [int(d) for d in dims]
    times = []
    for d in dims:
        params = reference_adam_params(n_particles=n_particles, batch_size=batch_size, max_iter=iterations)
        obj = rastrigin_objective(RastriginSpec(d))
        rng = np.random.default_rng(seed)
        init = rng.uniform(-3, 3, size=(n_particles, d))
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            run_adam_cbo(obj, init, params, seed)
            best = min(best, time.perf_counter() - t0)
        times.append(best / iterations)
    if len(dims) >= 2:
        slope, intercept = np.polyfit(dims, times, 1)
        pred = slope * np.asarray(dims) + intercept
        ss_res = float(((np.asarray(times) - pred) ** 2).sum())
        ss_tot = float(((np.asarray(times) - np.mean(times)) ** 2).sum())
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        slope, intercept, r2 = float("nan"), float("nan"), float("nan")
    return ScalingReport(dims, times, float(slope), float(intercept), float(r2))
