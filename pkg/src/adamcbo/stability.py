"""Linear stability of the noise-free, continuous-time Adam-CBO dynamics.

Around the optimum the moment equations linearize to

    d/dt (m, v, x~) = A (m, v, x~),
    A = [[-(1 - b1), 0, 1 - b1], [0, -(1 - b2), 0], [-mu, 0, 0]],   mu = lam / eps,

whose spectrum ``{b2 - 1, (b1 - 1 +- i sqrt((1 - b1)(b1 - 1 + 4 mu))) / 2}``
has real parts independent of ``lam``. Plain CBO without noise is
``x' = -lam (x - x_bar)`` and decays at exactly ``lam``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericError, UsageError

__all__ = [
    "StabilityParams",
    "LinearState",
    "Trajectory",
    "stability_matrix",
    "closed_form_eigenvalues",
    "slowest_rate",
    "rk4_propagator",
    "simulate_linearized",
    "cbo_linear_decay",
    "fit_envelope_rate",
]


@dataclass(frozen=True)
class StabilityParams:
    beta1: float = 0.9
    beta2: float = 0.99
    mu: float = 1e7

    def __post_init__(self):
        if not 0 < self.beta1 <= 1 or not 0 < self.beta2 <= 1:
            raise UsageError(f"betas must lie in (0, 1], got {self.beta1}, {self.beta2}")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise UsageError(f"mu must be finite and > 0, got {self.mu}")

    @classmethod
    def from_learning_rate(cls, lam, epsilon=1e-8, beta1=0.9, beta2=0.99):
        return cls(beta1, beta2, lam / epsilon)


@dataclass(frozen=True)
class LinearState:
    m: float = 0.0
    v: float = 0.0
    x_tilde: float = 0.0

    def as_array(self):
        return np.array([self.m, self.v, self.x_tilde], dtype=float)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    decay_rate: float
    frequency: float


def stability_matrix(p):
    a1, a2 = 1.0 - p.beta1, 1.0 - p.beta2
    return np.array([[-a1, 0.0, a1], [0.0, -a2, 0.0], [-p.mu, 0.0, 0.0]])


def closed_form_eigenvalues(p):
    """The three eigenvalues of :func:`stability_matrix`, as complex numbers.

    When ``b1 - 1 + 4 mu < 0`` the pair is real and both roots of the
    quadratic are returned with zero imaginary part.
    """
    a1 = 1.0 - p.beta1
    radicand = a1 * (p.beta1 - 1.0 + 4.0 * p.mu)
    half = 0.5 * (p.beta1 - 1.0)
    if radicand >= 0:
        root = 0.5j * np.sqrt(radicand)
    else:
        root = 0.5 * np.sqrt(-radicand)
    return np.array([complex(p.beta2 - 1.0), half + root, half - root], dtype=complex)


def slowest_rate(p):
    """Largest real part of the spectrum (the asymptotic decay rate, negative)."""
    return float(closed_form_eigenvalues(p).real.max())


def rk4_propagator(A, dt):
    """One classical Runge-Kutta step for ``y' = A y`` as a matrix."""
    hA = dt * np.asarray(A, dtype=float)
    eye = np.eye(hA.shape[0])
    return eye + hA @ (eye + hA @ (eye / 2 + hA @ (eye / 6 + hA / 24)))


def _propagate(S, y0, n_steps, block=1024):
    """States ``S**k @ y0`` for ``k = 0 .. n_steps``, in blocks of precomputed powers."""
    dim = S.shape[0]
    powers = np.empty((block, dim, dim))
    powers[0] = np.eye(dim)
    for k in range(1, block):
        powers[k] = S @ powers[k - 1]
    jump = S @ powers[-1]
    out = np.empty((n_steps + 1, dim))
    y = np.asarray(y0, dtype=float)
    for start in range(0, n_steps + 1, block):
        stop = min(start + block, n_steps + 1)
        out[start:stop] = powers[: stop - start] @ y
        y = jump @ y
        if not np.isfinite(y).all() or not np.isfinite(out[start:stop]).all():
            raise NumericError(f"trajectory diverged near step {start}")
    return out


def fit_envelope_rate(times, x, n_windows=40):
    """Exponential decay rate of the envelope of an oscillating signal.

    The window maxima of ``|x|`` are regressed on time in log scale; returns
    the positive rate ``r`` in ``|x| ~ exp(-r t)`` (nan for a zero signal).
    """
    x = np.abs(np.asarray(x, dtype=float))
    if not x.any():
        return float("nan")
    edges = np.linspace(0, len(x), n_windows + 1).astype(int)
    tw, lw = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        k = lo + int(np.argmax(x[lo:hi]))
        if x[k] > 0:
            tw.append(times[k])
            lw.append(np.log(x[k]))
    slope = np.polyfit(tw, lw, 1)[0]
    return float(-slope)


def _frequency(times, x):
    """Angular frequency from the mean spacing of sign changes."""
    s = np.signbit(x)
    crossings = np.flatnonzero(s[1:] != s[:-1])
    if len(crossings) < 3:
        return 0.0
    half_period = np.diff(times[crossings]).mean()
    return float(np.pi / half_period)


def simulate_linearized(p, init, horizon, dt=None):
    """Integrate the linearized system with classical RK4.

    ``dt`` defaults to ``0.1 / spectral_radius``. The returned trajectory
    carries the fitted envelope decay rate and angular frequency of ``x~``.
    """
    A = stability_matrix(p)
    rho = float(np.abs(closed_form_eigenvalues(p)).max())
    if dt is None:
        dt = 0.1 / rho if rho > 0 else 0.1
    if not dt > 0 or not horizon > 0:
        raise UsageError("dt and horizon must be > 0")
    if dt * rho >= 1.0:
        raise UsageError(f"dt={dt} too large for spectral radius {rho:.3g}")
    y0 = init.as_array() if isinstance(init, LinearState) else np.asarray(init, dtype=float)
    n_steps = int(np.ceil(horizon / dt))
    states = _propagate(rk4_propagator(A, dt), y0, n_steps)
    times = dt * np.arange(n_steps + 1)
    xt = states[:, 2]
    return Trajectory(times, states, fit_envelope_rate(times, xt), _frequency(times, xt) if xt.any() else 0.0)


def cbo_linear_decay(lam, x0=1.0, horizon=None, dt=None):
    """Simulate ``x' = -lam x`` with RK4 and return ``(times, x, fitted_rate)``."""
    if not lam > 0:
        raise UsageError(f"lambda must be > 0, got {lam}")
    horizon = 5.0 / lam if horizon is None else horizon
    dt = 0.01 / lam if dt is None else dt
    n_steps = int(np.ceil(horizon / dt))
    x = _propagate(rk4_propagator([[-lam]], dt), [x0], n_steps)[:, 0]
    times = dt * np.arange(n_steps + 1)
    if not x.any():
        return times, x, float("nan")
    rate = -np.polyfit(times, np.log(np.abs(x)), 1)[0]
    return times, x, float(rate)
