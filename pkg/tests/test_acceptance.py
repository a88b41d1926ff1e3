"""Acceptance suite, one test group per criterion.

Each test is named ``test_cNN_*`` so the terminal summary can print one
PASS/FAIL line per criterion. Statistical runs are marked ``slow``; the
d=1000/d=500 extended runs are marked ``long`` and need ADAMCBO_LONG=1.
"""

import time

import numpy as np
import pytest

import test_benchmark
import test_core
import test_neural
import test_schedules
from adamcbo.adam_cbo import AdamCboParams, MomentState, adam_cbo_iteration, bias_correct, update_moments
from adamcbo.benchmark import (
    RastriginSpec,
    TrialConfig,
    reference_adam_params,
    reference_cbo_params,
    run_success_trials,
    scaling_probe,
)
from adamcbo.cbo import CboParams, cbo_iteration
from adamcbo.core import Objective
from adamcbo.neural import (
    MlpSpec,
    forward,
    input_gradient,
    make_target,
    param_count,
    pde_phase_plan,
    reduced_fit_phase_plan,
    unflatten,
)
from adamcbo.schedules import SigmaSchedule
from adamcbo.stability import (
    LinearState,
    StabilityParams,
    cbo_linear_decay,
    closed_form_eigenvalues,
    simulate_linearized,
    stability_matrix,
)
from adamcbo.training import AdamCBORegressor, DeepRitzSolver, pde_eval_grid

from oracles import adam_cbo_step, cbo_step

# One fixed protocol for all success-rate rows: the reference parameters
# (CBO alpha=70 for 14000 iterations, Adam-CBO 10000 iterations).


def _f(x):
    x = np.asarray(x)
    return float(np.sum(x**2 - np.cos(3 * x)))


# 1. oracle equivalence


def test_c01_oracle_equivalence(record_property):
    rng = np.random.default_rng(2024)
    obj2 = {d: Objective(_f, d) for d in (1, 2)}
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(200):
        n = int(rng.integers(1, 5))
        d = int(rng.integers(1, 3))
        m = int(rng.choice([k for k in range(1, n + 1) if n % k == 0]))
        X = rng.uniform(-5, 5, (n, d))
        noise = rng.normal(size=(n, d))
        perm = rng.permutation(n).tolist()
        lam, gamma, sigma, alpha = rng.uniform(0.1, 2), rng.uniform(1e-3, 0.5), rng.uniform(0, 5), rng.uniform(0.1, 50)
        p = CboParams(lam=lam, gamma=gamma, sigma=sigma, alpha=alpha, n_particles=n, batch_size=m)
        got = cbo_iteration(X, obj2[d], p, None, perm=perm, noise=noise)
        want = np.array(cbo_step(X.tolist(), _f, perm, noise.tolist(), lam, gamma, sigma, alpha, m))
        worst = max(worst, np.abs(got - want).max())

        M0, V0, t = rng.normal(size=(n, d)), rng.uniform(0, 4, (n, d)), int(rng.integers(0, 500))
        b1, b2 = rng.uniform(0.5, 0.99), rng.uniform(0.5, 0.999)
        q = AdamCboParams(lam=lam / 10, beta1=b1, beta2=b2, alpha=alpha, n_particles=n, batch_size=m,
                          sigma_schedule=SigmaSchedule(0.99, 20.0))
        got, mom = adam_cbo_iteration(X, MomentState(M0, V0, t), obj2[d], q, None, perm=perm, noise=noise)
        want, wm, wv = adam_cbo_step(X.tolist(), M0.tolist(), V0.tolist(), t, _f, perm, noise.tolist(),
                                     lam / 10, b1, b2, 1e-8, alpha, m, 0.99 ** (t / 20))
        for a, b in ((got, want), (mom.m, wm), (mom.v, wv)):
            worst = max(worst, np.abs(a - np.array(b)).max())
    elapsed = time.perf_counter() - t0
    record_property("measured", f"max |diff| {worst:.1e} over 400 steps, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert elapsed / 400 < 1.0


# 2. momentum exactness


def test_c02_momentum_exactness(record_property):
    c = np.random.default_rng(7).uniform(-1, 1, 1000)
    m = v = np.zeros_like(c)
    worst = 0.0
    t0 = time.perf_counter()
    for t in range(1, 10_001):
        m, v = update_moments(c, m, v, 0.9, 0.99)
        m_hat, _ = bias_correct(m, v, t, 0.9, 0.99)
        worst = max(worst, np.abs(m_hat - c).max())
    elapsed = time.perf_counter() - t0
    record_property("measured", f"max |m_hat - c| {worst:.1e}, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert elapsed < 1.0


# 3. stability


def test_c03_eigenvalues_match_eigensolver(record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        p = StabilityParams(rng.uniform(0.01, 0.999), rng.uniform(0.01, 0.999), 10 ** rng.uniform(-3, 8))
        num = list(np.linalg.eigvals(stability_matrix(p)))
        for z in closed_form_eigenvalues(p):
            k = int(np.argmin([abs(z - w) for w in num]))
            worst = max(worst, abs(z - num.pop(k)) / max(1.0, abs(z)))
    record_property("measured", f"eigen max rel diff {worst:.1e}")
    assert worst <= 1e-9


def test_c03_decay_rates(record_property):
    t0 = time.perf_counter()
    rates = [simulate_linearized(StabilityParams(0.9, 0.99, mu), LinearState(0.0, 0.0, 1.0), 200.0).decay_rate
             for mu in (1e3, 1e5, 1e7)]
    spread = max(rates) / min(rates) - 1
    cbo = {lam: cbo_linear_decay(lam)[2] for lam in (0.1, 1.0)}
    elapsed = time.perf_counter() - t0
    record_property("measured", f"adam rates {[round(r, 5) for r in rates]} spread {spread:.2%}; "
                                f"cbo {cbo}; {elapsed:.1f} s")
    assert spread < 0.05
    for lam, rate in cbo.items():
        assert rate == pytest.approx(lam, rel=0.01)
    assert elapsed < 10


# 4. CBO success rates


def _cbo_rate(d, trials=100):
    params = reference_cbo_params("gaussian", 50, 40)
    return run_success_trials(TrialConfig(params, n_trials=trials, seed=d), RastriginSpec(d))


@pytest.mark.slow
@pytest.mark.parametrize("d, low, high", [(2, 95, 100), (10, 90, 100), (30, 5, 50)])
def test_c04_cbo_success(record_property, d, low, high):
    rep = _cbo_rate(d)
    record_property("measured", f"d={d} {rep.successes}/100 (band {low}-{high}, {rep.seconds:.0f} s)")
    assert low <= rep.successes <= high


# 5. Adam-CBO success rates


@pytest.mark.slow
def test_c05_adam_d30(record_property):
    params = reference_adam_params("gaussian", 500, 5)
    rep = run_success_trials(TrialConfig(params, n_trials=50, seed=30), RastriginSpec(30))
    record_property("measured", f"d=30 {rep.successes}/50 (need 45, {rep.seconds:.0f} s)")
    assert rep.successes >= 45


@pytest.mark.slow
def test_c05_adam_d100(record_property):
    params = reference_adam_params("gaussian", 5000, 5)
    rep = run_success_trials(TrialConfig(params, n_trials=20, seed=100), RastriginSpec(100))
    record_property("measured", f"d=100 {rep.successes}/20 (need 18, {rep.seconds:.0f} s)")
    assert rep.successes >= 18


# 6. extended run


@pytest.mark.long
@pytest.mark.parametrize("d", [1000, 500])
def test_c06_adam_extended(record_property, d):
    params = reference_adam_params("gaussian", 10_000, 50)
    rep = run_success_trials(TrialConfig(params, n_trials=5, seed=d), RastriginSpec(d))
    record_property("measured", f"d={d} {rep.successes}/5 (need 4, {rep.seconds:.0f} s)")
    assert rep.successes >= 4


# 7. zero initialization


@pytest.mark.slow
def test_c07_zero_init(record_property):
    params = reference_adam_params("gaussian", 500, 5)
    rep = run_success_trials(TrialConfig(params, n_trials=50, init="zeros", seed=31), RastriginSpec(30))
    record_property("measured", f"d=30 zero init {rep.successes}/50 (need 42, {rep.seconds:.0f} s)")
    assert rep.successes >= 42


# 8. linear cost


@pytest.mark.slow
def test_c08_linear_cost(record_property):
    rep = scaling_probe([125, 250, 500, 1000], n_particles=1000, batch_size=50, iterations=50, repeats=3)
    ratio = rep.seconds_per_iter[-1] / rep.seconds_per_iter[0]
    record_property("measured", f"R^2 {rep.r_squared:.4f}, t(1000)/t(125) {ratio:.2f}, "
                                f"s/iter {[f'{s:.2e}' for s in rep.seconds_per_iter]}")
    assert rep.r_squared >= 0.98
    assert ratio <= 10


# 9. parameter counts


def test_c09_parameter_counts(record_property):
    counts = [
        param_count(MlpSpec(1, 50, 3, "sigmoid")),
        param_count(MlpSpec.from_depth(1, 10, 4, "sigmoid", convention="layers")),
        param_count(MlpSpec.from_depth(1, 10, 22, "sigmoid", convention="layers")),
    ]
    record_property("measured", f"{counts}")
    assert counts == [2701, 141, 2121]


# 10. input gradients


def _fd_rel_error(spec, theta, x, h=1e-5):
    g = input_gradient(spec, theta, x)
    fd = np.empty_like(g)
    for k in range(spec.input_dim):
        e = np.zeros(spec.input_dim)
        e[k] = h
        fd[:, k] = (forward(spec, theta, x + e) - forward(spec, theta, x - e)) / (2 * h)
    return float((np.linalg.norm(g - fd, axis=1) / np.maximum(np.linalg.norm(fd, axis=1), 1e-12)).max())


def _away_from_kinks(spec, theta, x, margin=0.05):
    h = x[None]
    keep = np.ones(len(x), dtype=bool)
    for W, b in unflatten(spec, theta[None])[:-1]:
        z = h @ np.swapaxes(W, -1, -2) + b[:, None, :]
        keep &= np.abs(z[0]).min(axis=1) > margin
        if spec.activation == "sqrtabs":
            h = np.sqrt(np.abs(z))
        else:
            h = np.maximum(z, 0) ** (2 if spec.activation == "requ" else 1)
    return x[keep]


def test_c10_input_gradients(record_property):
    rng = np.random.default_rng(10)
    spec = MlpSpec(3, 10, 3, "sigmoid")
    err = {"sigmoid": _fd_rel_error(spec, rng.normal(size=spec.n_params), rng.uniform(-1, 1, (100, 3)))}
    for act in ("relu", "requ", "sqrtabs"):
        spec = MlpSpec(2, 8, 3, act)
        theta = rng.normal(size=spec.n_params)
        x = _away_from_kinks(spec, theta, rng.uniform(-1, 1, (2000, 2)))[:100]
        assert len(x) == 100
        err[act] = _fd_rel_error(spec, theta, x)
    record_property("measured", ", ".join(f"{k} {v:.1e}" for k, v in err.items()))
    assert err.pop("sigmoid") <= 1e-6
    assert max(err.values()) <= 1e-5


# 11. function fitting


@pytest.mark.slow
def test_c11_function_fitting(record_property, tmp_path_factory):
    x = np.linspace(-1, 1, 51)[:, None]
    y = make_target("target1")(x[:, 0])
    est = AdamCBORegressor(width=50, depth=3, lam=0.2, n_particles=500, phases=reduced_fit_phase_plan(),
                           record_every=1000, random_state=0).fit(x, y)
    out = tmp_path_factory.mktemp("fit")
    grid = np.linspace(-1, 1, 1001)
    np.savetxt(out / "prediction.txt", np.column_stack([grid, est.predict(grid[:, None])]))
    np.savetxt(out / "target.txt", np.column_stack([grid, make_target("target1")(grid)]))
    np.savetxt(out / "loss_curve.txt", np.array(est.loss_curve_))
    factor = est.initial_loss_ / est.loss_
    record_property("measured", f"loss {est.initial_loss_:.4f} -> {est.loss_:.4f} ({factor:.1f}x), plot data in {out}")
    assert factor >= 10


# 12. singular PDE


@pytest.mark.slow
def test_c12_pde_d2(record_property):
    t0 = time.perf_counter()
    est = DeepRitzSolver(dim=2, phases=pde_phase_plan(), random_state=0).fit()
    err = est.errors(pde_eval_grid(2))
    elapsed = time.perf_counter() - t0
    record_property("measured", f"L2 {err['l2']:.2e}, Linf {err['linf']:.2e}, {elapsed:.0f} s")
    assert err["l2"] <= 5e-2, "hard floor"
    assert err["l2"] <= 2e-2
    assert elapsed <= 3600


# 13. property suites


@pytest.mark.parametrize(
    "prop",
    [
        test_core.test_consensus_in_convex_hull,
        test_core.test_consensus_shift_invariance,
        test_core.test_consensus_shift_invariance_generic,
        test_core.test_consensus_sharpness_limit,
        test_core.test_partition_law,
        test_schedules.test_phase_at_total_and_consistent,
        test_benchmark.test_shift_covariance,
        test_benchmark.test_minimum_at_shift,
        test_neural.test_flatten_roundtrip,
    ],
    ids=lambda f: f.__name__.removeprefix("test_"),
)
def test_c13_property_suites(record_property, prop):
    assert prop._hypothesis_internal_use_settings.max_examples >= 1000
    t0 = time.perf_counter()
    prop()
    elapsed = time.perf_counter() - t0
    record_property("measured", f"{prop.__name__.removeprefix('test_')} {elapsed:.1f} s")
    assert elapsed < 60
