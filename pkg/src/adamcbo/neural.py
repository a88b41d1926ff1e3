"""Dense networks with a flat parameter vector, for gradient-free training.

A network with input dimension ``d_in``, width ``n`` and ``L`` affine maps is

    x -> act(W1 x + b1) -> act(W2 h + b2) -> ... -> W_L h + b_L

with ``W1`` of shape ``(n, d_in)``, hidden ``W`` of shape ``(n, n)`` and a
linear scalar output ``W_L`` of shape ``(1, n)``. The parameter vector is
layer-major: ``W1`` row-major, ``b1``, ``W2``, ``b2``, ..., ``W_L``, ``b_L``.

Every function accepts a single ``theta`` of shape ``(D,)`` or a stack of
``P`` parameter vectors ``(P, D)``; the stacked form is how an optimizer
evaluates its whole ensemble in one call.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import UsageError
from .schedules import Phase, PhasePlan

__all__ = [
    "ACTIVATIONS",
    "MlpSpec",
    "param_count",
    "flatten",
    "unflatten",
    "forward",
    "input_gradient",
    "forward_with_gradient",
    "l2_loss",
    "make_target",
    "PdeSpec",
    "Quadrature",
    "sample_quadrature",
    "ritz_terms",
    "deep_ritz_loss",
    "error_report",
    "save_model",
    "load_model",
    "fit_phase_plan",
    "depth_phase_plan",
]

ACTIVATIONS = ("sigmoid", "relu", "requ", "sqrtabs")
SQRT_CLAMP = 1e-12


def _act(kind, z):
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "requ":
        r = np.maximum(z, 0.0)
        return r * r
    return np.sqrt(np.abs(z))


def _act_grad(kind, z):
    if kind == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return s * (1.0 - s)
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "requ":
        return 2.0 * np.maximum(z, 0.0)
    # d|z|^(1/2)/dz = sign(z) / (2 sqrt|z|), taken as 0 at z = 0
    return np.sign(z) / (2.0 * np.sqrt(np.maximum(np.abs(z), SQRT_CLAMP)))


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a fully connected scalar-output network.

    ``n_transforms`` counts affine maps (hidden layers + output layer), so a
    single hidden layer is ``n_transforms=2``. :meth:`from_depth` converts
    from the layer-counting convention where depth includes the input layer.
    """

    input_dim: int = 1
    width: int = 50
    n_transforms: int = 3
    activation: str = "sigmoid"

    def __post_init__(self):
        if self.input_dim < 1 or self.width < 1:
            raise UsageError("input_dim and width must be >= 1")
        if self.n_transforms < 2:
            raise UsageError(f"n_transforms must be >= 2, got {self.n_transforms}")
        if self.activation not in ACTIVATIONS:
            raise UsageError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")

    @classmethod
    def from_depth(cls, input_dim, width, depth, activation="sigmoid", convention="transforms"):
        """``convention="transforms"``: depth counts affine maps (2701-parameter
        net is width 50, depth 3). ``convention="layers"``: depth counts layers
        including the input, i.e. one more than the affine maps (141-parameter
        net is width 10, depth 4)."""
        if convention == "transforms":
            return cls(input_dim, width, depth, activation)
        if convention == "layers":
            return cls(input_dim, width, depth - 1, activation)
        raise UsageError(f"unknown depth convention {convention!r}")

    @property
    def shapes(self):
        n = self.width
        return [(n, self.input_dim)] + [(n, n)] * (self.n_transforms - 2) + [(1, n)]

    @property
    def n_params(self):
        return sum(o * i + o for o, i in self.shapes)


def param_count(spec):
    n, d = spec.width, spec.input_dim
    return n * (d + 1) + (spec.n_transforms - 2) * n * (n + 1) + (n + 1)


def flatten(layers):
    """Pack ``[(W1, b1), ..., (W_L, b_L)]`` into the layer-major vector."""
    return np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])


def unflatten(spec, theta):
    """Views ``[(W, b), ...]`` into ``theta``; leading particle axes are kept."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != spec.n_params:
        raise UsageError(f"parameter vector has length {theta.shape[-1]}, architecture needs {spec.n_params}")
    lead = theta.shape[:-1]
    layers, k = [], 0
    for o, i in spec.shapes:
        W = theta[..., k : k + o * i].reshape(lead + (o, i))
        k += o * i
        b = theta[..., k : k + o]
        k += o
        layers.append((W, b))
    return layers


def _inputs(spec, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1 and spec.input_dim > 1 or x.ndim == 0
    if x.ndim <= 1:
        x = x.reshape(-1, spec.input_dim)
    if x.shape[-1] != spec.input_dim:
        raise UsageError(f"inputs have dimension {x.shape[-1]}, network expects {spec.input_dim}")
    return x, single


def _run(spec, theta, x, with_grad):
    theta = np.asarray(theta, dtype=float)
    stacked = theta.ndim == 2
    th = theta if stacked else theta[None, :]
    layers = unflatten(spec, th)
    x, single = _inputs(spec, x)
    h = x[None, :, :]  # (P|1, S, d_in)
    J = None
    if with_grad:
        J = np.broadcast_to(np.eye(spec.input_dim), (1, 1, spec.input_dim, spec.input_dim))
    for li, (W, b) in enumerate(layers):
        Wt = np.swapaxes(W, -1, -2)  # (P, in, out)
        z = h @ Wt + b[:, None, :]
        if with_grad:
            J = J @ Wt[:, None, :, :]  # (P, S, d_in, out)
        if li < len(layers) - 1:
            if with_grad:
                J = J * _act_grad(spec.activation, z)[:, :, None, :]
            h = _act(spec.activation, z)
        else:
            h = z
    out = h[..., 0]
    grad = J[..., 0] if with_grad else None
    if not stacked:
        out = out[0]
        grad = grad[0] if with_grad else None
        if single:
            out = out[0]
            grad = grad[0] if with_grad else None
    return out, grad


def forward(spec, theta, x):
    """Network output at ``x`` (``(S, d_in)``, or one point); ``(P, S)`` for stacked ``theta``."""
    return _run(spec, theta, x, False)[0]


def input_gradient(spec, theta, x):
    """Exact gradient with respect to the inputs, by forward-mode differentiation."""
    return _run(spec, theta, x, True)[1]


def forward_with_gradient(spec, theta, x):
    return _run(spec, theta, x, True)


def l2_loss(spec, theta, x, u, weights=None):
    """Weighted mean of squared residuals ``(net(x) - u)**2``."""
    r = forward(spec, theta, x) - np.asarray(u, dtype=float)
    if weights is None:
        return np.mean(r * r, axis=-1)
    w = np.asarray(weights, dtype=float)
    return (r * r) @ w / w.sum()


def make_target(which, k=None):
    """Pointwise target on [-1, 1]: ``"target1"``, ``"target2"`` or ``"func3"`` (needs ``k``)."""
    if which == "target1":
        return lambda x: np.sin(2 * np.pi * np.asarray(x)) + np.sin(8 * np.pi * np.asarray(x) ** 2)
    if which == "target2":

        def target2(x):
            x = np.asarray(x, dtype=float)
            ax = np.abs(x)
            out = np.zeros_like(x)
            out[(ax > 7 / 8) | (ax < 1 / 8)] = 1.0
            out[(ax > 3 / 8) & (ax < 5 / 8)] = -1.0
            return out

        return target2
    if which == "func3":
        if k not in (2, 3, 4):
            raise UsageError(f"func3 needs k in (2, 3, 4), got {k}")
        return lambda x: np.sin(k * np.pi * np.asarray(x) ** k)
    raise UsageError(f"unknown target {which!r}")


@dataclass(frozen=True)
class PdeSpec:
    """``-div(A grad u) = -sum_i delta(x_i)`` on ``[-1, 1]**d`` with ``A = diag(|x_i|**0.5)``.

    The exact solution and the boundary data are both ``sum_i |x_i|**0.5``.
    """

    dim: int = 2
    eta: float = 500.0

    def __post_init__(self):
        if self.dim < 1:
            raise UsageError(f"dim must be >= 1, got {self.dim}")
        if not self.eta > 0:
            raise UsageError(f"eta must be > 0, got {self.eta}")

    def exact(self, x):
        return np.sqrt(np.abs(np.asarray(x, dtype=float))).sum(axis=-1)

    boundary_data = exact

    def exact_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.sign(x) / (2.0 * np.sqrt(np.maximum(np.abs(x), SQRT_CLAMP)))

    def coefficient(self, x):
        return np.sqrt(np.abs(np.asarray(x, dtype=float)))

    @property
    def boundary_area(self):
        return 2 * self.dim * 2.0 ** (self.dim - 1)


@dataclass
class Quadrature:
    interior: np.ndarray
    slices: list
    boundary: np.ndarray


def _off_kinks(x):
    x[x == 0.0] = 1e-8
    return x


def sample_quadrature(pde, n_interior, n_slice, n_boundary, rng):
    """Uniform Monte Carlo points: interior, one slice ``{x_i = 0}`` per axis, and boundary.

    Interior coordinates that land exactly on 0 are moved to 1e-8 so the
    clamped singular derivative is never hit.
    """
    d = pde.dim
    interior = _off_kinks(rng.uniform(-1.0, 1.0, size=(n_interior, d)))
    slices = []
    for i in range(d):
        s = rng.uniform(-1.0, 1.0, size=(n_slice, d))
        s[:, i] = 0.0
        slices.append(s)
    boundary = rng.uniform(-1.0, 1.0, size=(n_boundary, d))
    face = rng.integers(0, 2 * d, size=n_boundary)
    boundary[np.arange(n_boundary), face // 2] = np.where(face % 2 == 0, -1.0, 1.0)
    return Quadrature(interior, slices, boundary)


def _combine(pde, grad_int, interior, slice_vals, bnd_vals, bnd_pts):
    d = pde.dim
    energy = 0.5 * (pde.coefficient(interior) * grad_int**2).sum(axis=-1)
    interior_term = 2.0**d * energy.mean(axis=-1)
    delta_term = sum(2.0 ** (d - 1) * v.mean(axis=-1) for v in slice_vals)
    r = bnd_vals - pde.boundary_data(bnd_pts)
    boundary_term = pde.eta * pde.boundary_area * (r * r).mean(axis=-1)
    return interior_term, delta_term, boundary_term


def ritz_terms(pde, quad, value_fn, grad_fn):
    """Monte Carlo energy terms ``(interior, delta, boundary)`` for a closed-form function."""
    return _combine(
        pde,
        grad_fn(quad.interior),
        quad.interior,
        [value_fn(s) for s in quad.slices],
        value_fn(quad.boundary),
        quad.boundary,
    )


def deep_ritz_loss(spec, theta, pde, quad):
    """Penalized Ritz energy of the network(s) on the given quadrature points."""
    _, grad = forward_with_gradient(spec, theta, quad.interior)
    pts = np.concatenate(quad.slices + [quad.boundary])
    vals = forward(spec, theta, pts)
    ns = quad.slices[0].shape[0] if quad.slices else 0
    slice_vals = [vals[..., i * ns : (i + 1) * ns] for i in range(len(quad.slices))]
    bnd = vals[..., len(quad.slices) * ns :]
    i_t, d_t, b_t = _combine(pde, grad, quad.interior, slice_vals, bnd, quad.boundary)
    return i_t + d_t + b_t


def error_report(predicted, exact):
    """Root-mean-square (L2) and max (Linf) errors on an evaluation grid, plus relative L2."""
    r = np.asarray(predicted, dtype=float) - np.asarray(exact, dtype=float)
    l2 = float(np.sqrt(np.mean(r * r)))
    norm = float(np.sqrt(np.mean(np.asarray(exact, dtype=float) ** 2)))
    return {"l2": l2, "linf": float(np.abs(r).max()), "rel_l2": l2 / norm if norm > 0 else float("nan")}


def save_model(path, spec, theta):
    """Write a JSON document holding the architecture and the flat parameters."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise UsageError(f"theta has shape {theta.shape}, expected ({spec.n_params},)")
    doc = {
        "format": "adamcbo-mlp",
        "version": 1,
        "layout": "layer-major: W1 row-major, b1, W2, b2, ..., W_L, b_L; linear output",
        "spec": asdict(spec),
        "theta": theta.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "adamcbo-mlp":
        raise UsageError(f"{path} is not an adamcbo model file")
    spec = MlpSpec(**doc["spec"])
    theta = np.asarray(doc["theta"], dtype=float)
    if theta.shape != (spec.n_params,):
        raise UsageError(f"{path}: parameter count {theta.size} does not match the architecture")
    return spec, theta


def fit_phase_plan(total=100_000, noisy=50_000, lam=0.2):
    """Function-fitting schedule: M=5 with noise, then noise off with M=10."""
    return PhasePlan((
        Phase(0, noisy, lam=lam, batch_size=5, noise_enabled=True),
        Phase(noisy, total, lam=lam, batch_size=10, noise_enabled=False),
    ))


def depth_phase_plan(total=2_000_000):
    """Deep-network schedule: M=5 noisy, M=20 quiet, M=100 quiet, then lambda 1e-2."""
    return PhasePlan((
        Phase(0, 30_000, lam=0.2, batch_size=5, noise_enabled=True),
        Phase(30_000, 80_000, lam=0.2, batch_size=20, noise_enabled=False),
        Phase(80_000, 150_000, lam=0.2, batch_size=100, noise_enabled=False),
        Phase(150_000, total, lam=1e-2, batch_size=100, noise_enabled=False),
    ))


def reduced_fit_phase_plan(total=10_000):
    """Reduced fitting schedule: noise-free halves with M=5 then M=10."""
    half = total // 2
    return PhasePlan((
        Phase(0, half, batch_size=5, noise_enabled=False),
        Phase(half, total, batch_size=10, noise_enabled=False),
    ))


def pde_phase_plan(total=4000):
    """Reduced singular-PDE schedule in noise-free quarters: M=5, 20, 100 at
    the base step, then M=100 with lambda 1e-2."""
    q = total // 4
    return PhasePlan((
        Phase(0, q, batch_size=5, noise_enabled=False),
        Phase(q, 2 * q, batch_size=20, noise_enabled=False),
        Phase(2 * q, 3 * q, batch_size=100, noise_enabled=False),
        Phase(3 * q, total, lam=1e-2, batch_size=100, noise_enabled=False),
    ))
