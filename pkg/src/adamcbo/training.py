"""Scikit-learn style estimators that train networks with Adam-CBO.

Training never differentiates with respect to the parameters: the optimizer
only sees a vectorized objective mapping a stack of parameter vectors to
their losses.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .adam_cbo import AdamCboParams, run_adam_cbo
from .core import Objective, make_streams
from .exceptions import UsageError
from .neural import (
    MlpSpec,
    PdeSpec,
    deep_ritz_loss,
    error_report,
    forward,
    l2_loss,
    sample_quadrature,
)
from .schedules import NoiseProcess, PhasePlan, SigmaSchedule

__all__ = ["AdamCBORegressor", "DeepRitzSolver", "pde_eval_grid"]


class _AdamCBONetwork(BaseEstimator):
    """Shared optimizer plumbing; subclasses supply the objective."""

    def _mlp_spec(self, input_dim):
        return MlpSpec.from_depth(input_dim, self.width, self.depth, self.activation, self.depth_convention)

    def _params(self, n_params):
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
        )

    def _optimize(self, spec, loss, streams, callback=None, monitor=None):
        # ``monitor`` scores the initial ensemble and the loss history; a
        # stochastic loss gets its own copy so that recording does not
        # consume the optimizer's random draws
        monitor = loss if monitor is None else monitor
        params = self._params(spec.n_params)
        init = streams["init"].uniform(-self.init_scale, self.init_scale, size=(params.n_particles, spec.n_params))
        history = []

        def record(t, X):
            if self.record_every and (t % self.record_every == 0 or t == params.total_iter):
                xs = X[np.argmin(monitor.evaluate(X))]
                history.append((t, float(monitor(xs))))
            if callback is not None:
                callback(t, X)

        initial_loss = float(np.min(monitor.evaluate(init)))
        res = run_adam_cbo(loss, init, params, streams["run"], callback=record)
        return res, initial_loss, history


class AdamCBORegressor(_AdamCBONetwork, RegressorMixin):
    """Least-squares fit of a dense network by Adam-CBO.

    Parameters
    ----------
    width, depth : int
        Network width and depth; ``depth_convention`` says whether depth
        counts affine maps (``"transforms"``) or layers (``"layers"``).
    activation : {"sigmoid", "relu", "requ", "sqrtabs"}
    lam, beta1, beta2, epsilon, alpha, n_particles, batch_size, max_iter, noise
        Adam-CBO settings; ``phases`` (a PhasePlan or list of Phase) overrides
        ``max_iter`` and switches batch size, step and noise over time.
    sigma_base, sigma_period : float
        Noise amplitude ``sigma_base ** (t / sigma_period)``.
    init_scale : float
        Particles start uniform on ``[-init_scale, init_scale]``.
    record_every : int
        Loss-history sampling interval (0 disables).

    Attributes
    ----------
    coef_ : ndarray
        Flat parameter vector of the final consensus network.
    mlp_spec_ : MlpSpec
    initial_loss_, loss_ : float
        Training loss of the best initial particle and of the final network.
    loss_curve_ : list of (iteration, loss)
    """

    def __init__(
        self,
        width=50,
        depth=3,
        activation="sigmoid",
        depth_convention="transforms",
        lam=0.2,
        beta1=0.9,
        beta2=0.99,
        epsilon=1e-8,
        alpha=1e5,
        n_particles=500,
        batch_size=5,
        max_iter=1000,
        noise="gaussian",
        sigma_base=0.99,
        sigma_period=20.0,
        phases=None,
        init_scale=1.0,
        record_every=0,
        random_state=None,
    ):
        self.width = width
        self.depth = depth
        self.activation = activation
        self.depth_convention = depth_convention
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
        self.init_scale = init_scale
        self.record_every = record_every
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, y_numeric=True)
        spec = self._mlp_spec(X.shape[1])
        w = None if sample_weight is None else np.asarray(sample_weight, dtype=float)
        loss = Objective(lambda T: l2_loss(spec, T, X, y, w), spec.n_params, vectorized=True)
        streams = make_streams(self.random_state, ("init", "run"))
        res, self.initial_loss_, self.loss_curve_ = self._optimize(spec, loss, streams)
        self.mlp_spec_ = spec
        self.coef_ = res.x_star
        self.loss_ = float(loss(res.x_star))
        self.n_iter_ = res.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise UsageError(f"X has {X.shape[1]} features, model was fit with {self.n_features_in_}")
        return forward(self.mlp_spec_, self.coef_, X)


def pde_eval_grid(dim, n_per_axis=101, n_random=20_000, seed=12345):
    """Fixed evaluation points on ``[-1, 1]**dim``: a tensor grid for d <= 2,
    seeded uniform points otherwise."""
    if dim <= 2:
        axis = np.linspace(-1.0, 1.0, n_per_axis)
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n_random, dim))


class _RitzObjective:
    """Ritz energy on quadrature points redrawn at every call.

    One call evaluates the whole ensemble, so all particles of an iteration
    share the same points.
    """

    def __init__(self, spec, pde, rng, n_interior, n_slice, n_boundary):
        self.spec, self.pde, self.rng = spec, pde, rng
        self.sizes = (n_interior, n_slice, n_boundary)

    def __call__(self, T):
        quad = sample_quadrature(self.pde, *self.sizes, self.rng)
        return deep_ritz_loss(self.spec, T, self.pde, quad)


class DeepRitzSolver(_AdamCBONetwork):
    """Deep Ritz solution of the singular diffusion problem by Adam-CBO.

    ``fit()`` takes no data: the loss is the penalized Ritz energy of
    :class:`~adamcbo.neural.PdeSpec` estimated on fresh Monte Carlo points.
    ``predict(X)`` evaluates the trained network.
    """

    def __init__(
        self,
        dim=2,
        width=20,
        depth=2,
        activation="sqrtabs",
        depth_convention="transforms",
        eta=500.0,
        n_interior=512,
        n_slice=128,
        n_boundary=256,
        lam=0.1,
        beta1=0.9,
        beta2=0.99,
        epsilon=1e-8,
        alpha=1e3,
        n_particles=500,
        batch_size=5,
        max_iter=3000,
        noise="gaussian",
        sigma_base=0.99,
        sigma_period=20.0,
        phases=None,
        init_scale=1.0,
        record_every=0,
        random_state=None,
    ):
        self.dim = dim
        self.width = width
        self.depth = depth
        self.activation = activation
        self.depth_convention = depth_convention
        self.eta = eta
        self.n_interior = n_interior
        self.n_slice = n_slice
        self.n_boundary = n_boundary
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
        self.init_scale = init_scale
        self.record_every = record_every
        self.random_state = random_state

    def fit(self, X=None, y=None, callback=None):
        pde = PdeSpec(self.dim, self.eta)
        spec = self._mlp_spec(self.dim)
        streams = make_streams(self.random_state, ("init", "run", "quadrature", "monitor"))
        sizes = (self.n_interior, self.n_slice, self.n_boundary)
        loss = Objective(_RitzObjective(spec, pde, streams["quadrature"], *sizes), spec.n_params, vectorized=True)
        monitor = Objective(_RitzObjective(spec, pde, streams["monitor"], *sizes), spec.n_params, vectorized=True)
        res, self.initial_loss_, self.loss_curve_ = self._optimize(spec, loss, streams, callback, monitor)
        self.pde_ = pde
        self.mlp_spec_ = spec
        self.coef_ = res.x_star
        self.n_iter_ = res.n_iter
        self.n_features_in_ = self.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return forward(self.mlp_spec_, self.coef_, X)

    def errors(self, X=None):
        """L2 (root-mean-square) and Linf errors against the exact solution."""
        check_is_fitted(self, "coef_")
        X = pde_eval_grid(self.dim) if X is None else check_array(X)
        return error_report(self.predict(X), self.pde_.exact(X))

    def profiles(self, n_points=201):
        """One-dimensional cuts through the origin along each axis.

        Returns ``{axis: (t, predicted, exact)}`` with all other coordinates 0.
        """
        check_is_fitted(self, "coef_")
        t = np.linspace(-1.0, 1.0, n_points)
        out = {}
        for i in range(self.dim):
            X = np.zeros((n_points, self.dim))
            X[:, i] = t
            out[i] = (t, self.predict(X), self.pde_.exact(X))
        return out
