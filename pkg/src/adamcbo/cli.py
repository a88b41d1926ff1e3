"""Command-line entry point: ``adamcbo <command> [--config PATH] [flags]``.

Every command resolves its configuration (see :mod:`adamcbo.config`), builds
all optimizer and problem objects up front so that an invalid document fails
before any work starts, then writes its artifacts to the output directory.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 130 interrupt.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from .adam_cbo import run_adam_cbo
from .benchmark import (
    RastriginSpec,
    TrialConfig,
    reference_adam_params,
    reference_cbo_params,
    rastrigin_objective,
    run_success_trials,
    scaling_probe,
)
from .cbo import CboParams, run_cbo
from .config import config_hash, load_config, resolve
from .core import Objective, make_streams
from .exceptions import ConfigError, NumericError, UsageError
from .neural import error_report, make_target, save_model
from .schedules import Phase, PhasePlan, SigmaSchedule
from .stability import StabilityParams, cbo_linear_decay, closed_form_eigenvalues, simulate_linearized
from .training import AdamCBORegressor, DeepRitzSolver, pde_eval_grid

__all__ = ["main", "build_parser", "optimizer_params"]

log = logging.getLogger("adamcbo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INTERRUPT = 0, 2, 3, 130

_CBO_ONLY = ("gamma", "sigma")
_ADAM_ONLY = ("beta1", "beta2", "epsilon", "sigma_schedule", "phases")


# -- config -> objects ------------------------------------------------------


def _schedule(doc):
    return SigmaSchedule(doc.get("base", 0.99), doc.get("period", 20.0))


def _phase_plan(phases):
    return PhasePlan(
        tuple(
            Phase(
                p["start"],
                p["end"],
                lam=p.get("lambda"),
                batch_size=p.get("M"),
                noise_enabled=p.get("noise", True),
                sigma=_schedule(p["sigma_schedule"]) if "sigma_schedule" in p else None,
            )
            for p in phases
        )
    )


def optimizer_params(section, kind=None, row=None, path="optimizer"):
    """Turn an ``optimizer`` section (plus an optional benchmark row) into params.

    Defaults are the reference settings for the chosen noise process. Keys of
    the section apply only when its ``kind`` matches ``kind``; row keys always
    apply. Any invalid combination raises :class:`ConfigError`.
    """
    kind = kind or section.get("kind", "adam_cbo")
    src = dict(section) if section.get("kind", kind) == kind else {}
    src.update({k: v for k, v in (row or {}).items() if k in ("N", "M", "t_N", "noise", "alpha")})
    wrong = _ADAM_ONLY if kind == "cbo" else _CBO_ONLY
    for key in wrong:
        if key in src:
            raise ConfigError(f"optimizer.{key}", f"not used by the {kind} optimizer")
    noise = src.get("noise", "gaussian")
    size = {}
    if "N" in src:
        size["n_particles"] = src["N"]
    if "M" in src:
        size["batch_size"] = src["M"]
    over = {}
    for key, name in (("lambda", "lam"), ("gamma", "gamma"), ("sigma", "sigma"), ("alpha", "alpha"),
                      ("beta1", "beta1"), ("beta2", "beta2"), ("epsilon", "epsilon"),
                      ("t_N", "max_iter"), ("stop_tol", "stop_tol")):
        if key in src:
            over[name] = src[key]
    try:
        if kind == "cbo":
            return reference_cbo_params(noise, **size, **over)
        if "sigma_schedule" in src:
            over["sigma_schedule"] = _schedule(src["sigma_schedule"])
        if "phases" in src:
            over["phase_plan"] = _phase_plan(src["phases"])
        return reference_adam_params(noise, **size, **over)
    except UsageError as exc:
        raise ConfigError(path, str(exc)) from exc


def _net_kwargs(opt, prob):
    """Estimator keyword arguments shared by the fit and pde commands."""
    params = optimizer_params(opt, "adam_cbo")
    return dict(
        width=prob["width"],
        depth=prob["depth"],
        activation=prob["activation"],
        depth_convention=prob["depth_convention"],
        lam=params.lam,
        beta1=params.beta1,
        beta2=params.beta2,
        epsilon=params.epsilon,
        alpha=params.alpha,
        n_particles=params.n_particles,
        batch_size=params.batch_size,
        max_iter=params.max_iter,
        noise=params.noise.kind,
        sigma_base=params.sigma_schedule.base,
        sigma_period=params.sigma_schedule.period,
        phases=params.phase_plan,
        init_scale=prob["init_scale"],
        record_every=prob["record_every"],
    )


# -- writers ----------------------------------------------------------------


class Emitter:
    """Writes artifacts into one directory, honoring ``output.formats``.

    Every CSV starts with a ``#`` comment holding the config hash and seed.
    """

    def __init__(self, doc):
        self.dir = doc["output"]["dir"]
        self.formats = set(doc["output"]["formats"])
        self.header = f"# config_sha256={config_hash(doc)} seed={doc['trials']['seed']}\n"
        self.written = []
        os.makedirs(self.dir, exist_ok=True)

    def _path(self, name):
        path = os.path.join(self.dir, name)
        self.written.append(path)
        return path

    def csv(self, name, columns):
        """Open a CSV for row-by-row writing; returns ``(file, writer)`` or None."""
        if "csv" not in self.formats:
            return None
        fh = open(self._path(name), "w", newline="")
        fh.write(self.header)
        w = csv.writer(fh)
        w.writerow(columns)
        fh.flush()
        return fh, w

    def table(self, name, columns, rows):
        out = self.csv(name, columns)
        if out is None:
            return
        fh, w = out
        with fh:
            w.writerows(rows)

    def jsonl(self, name, records):
        if "jsonl" not in self.formats:
            return None
        fh = open(self._path(name), "w")
        for r in records:
            fh.write(json.dumps(r) + "\n")
        fh.flush()
        return fh

    def columns(self, name, *cols):
        """Plain whitespace-separated plot data, one column per argument."""
        if "txt" not in self.formats:
            return
        np.savetxt(self._path(name), np.column_stack(cols), fmt="%.17g")


def _fmt(x):
    return repr(float(x))


# -- commands ---------------------------------------------------------------


def cmd_rastrigin_bench(doc, workers):
    opt, prob, trials = doc["optimizer"], doc["problem"], doc["trials"]
    plan = []
    for i, row in enumerate(prob["rows"]):
        path = f"problem.rows[{i}]"
        kind = row.get("optimizer", opt["kind"])
        params = optimizer_params(opt, kind, row, path)
        try:
            cfg = TrialConfig(
                params,
                n_trials=trials["count"],
                success_radius=trials["success_radius"],
                init=row.get("init", trials["init"]),
                seed=trials["seed"],
            )
            spec = RastriginSpec(row["dim"], offset=prob["offset"])
        except UsageError as exc:
            raise ConfigError(path, str(exc)) from exc
        plan.append((row, cfg, spec))

    out = Emitter(doc)
    table = out.csv("rastrigin.csv", ["d", "N", "M", "noise", "optimizer", "trials", "successes", "rate", "seconds"])
    log_fh = out.jsonl("trials.jsonl", [])
    try:
        for i, (row, cfg, spec) in enumerate(plan):
            p = cfg.params
            log.info("row %d: d=%d %s N=%d M=%d noise=%s", i, spec.dim, cfg.optimizer, p.n_particles, p.batch_size, p.noise.kind)
            rep = run_success_trials(cfg, spec, workers=workers)
            if table is not None:
                table[1].writerow([spec.dim, p.n_particles, p.batch_size, p.noise.kind, cfg.optimizer,
                                   rep.trials, rep.successes, _fmt(rep.rate), f"{rep.seconds:.3f}"])
                table[0].flush()
            if log_fh is not None:
                for k, (xs, dist) in enumerate(zip(rep.x_stars, rep.distances)):
                    rec = {"row": i, "trial": k, "d": spec.dim, "optimizer": cfg.optimizer,
                           "distance": dist, "success": bool(dist < cfg.success_radius),
                           "x_star": None if xs is None else np.asarray(xs).tolist()}
                    log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            for msg in rep.failures:
                log.warning("numeric failure in row %d: %s", i, msg)
    finally:
        for fh in (table[0] if table else None, log_fh):
            if fh is not None:
                fh.close()
    return out


def cmd_fit_function(doc, workers):
    opt, prob, seed = doc["optimizer"], doc["problem"], doc["trials"]["seed"]
    try:
        target = make_target(prob["target"], prob.get("k"))
        est = AdamCBORegressor(**_net_kwargs(opt, prob), random_state=seed)
        est._params(0)
    except UsageError as exc:
        raise ConfigError("problem", str(exc)) from exc
    x = np.linspace(-1.0, 1.0, prob["n_samples"])
    t0 = time.perf_counter()
    est.fit(x[:, None], target(x))
    seconds = time.perf_counter() - t0
    grid = np.linspace(-1.0, 1.0, prob["n_plot"])
    pred, exact = est.predict(grid[:, None]), target(grid)
    err = error_report(pred, exact)

    out = Emitter(doc)
    out.table(
        "fit.csv",
        ["target", "k", "width", "depth", "activation", "n_params", "iterations", "initial_loss", "final_loss",
         "l2", "linf", "seconds"],
        [[prob["target"], prob.get("k", ""), prob["width"], prob["depth"], prob["activation"], est.mlp_spec_.n_params,
          est.n_iter_, _fmt(est.initial_loss_), _fmt(est.loss_), _fmt(err["l2"]), _fmt(err["linf"]), f"{seconds:.3f}"]],
    )
    if est.loss_curve_:
        it, loss = zip(*est.loss_curve_)
        out.columns("loss_curve.txt", it, loss)
        fh = out.jsonl("loss_curve.jsonl", ({"iteration": int(a), "loss": float(b)} for a, b in est.loss_curve_))
        if fh is not None:
            fh.close()
    out.columns("prediction.txt", grid, pred)
    out.columns("target.txt", grid, exact)
    if "jsonl" in out.formats:
        save_model(out._path("model.json"), est.mlp_spec_, est.coef_)
    return out


def cmd_solve_pde(doc, workers):
    opt, prob, seed = doc["optimizer"], doc["problem"], doc["trials"]["seed"]
    try:
        est = DeepRitzSolver(
            dim=prob["dim"],
            eta=prob["eta"],
            n_interior=prob["n_interior"],
            n_slice=prob["n_slice"],
            n_boundary=prob["n_boundary"],
            **_net_kwargs(opt, prob),
            random_state=seed,
        )
        est._params(0)
    except UsageError as exc:
        raise ConfigError("problem", str(exc)) from exc
    t0 = time.perf_counter()
    est.fit()
    seconds = time.perf_counter() - t0
    err = est.errors(pde_eval_grid(prob["dim"], prob["grid_per_axis"]))

    out = Emitter(doc)
    out.table(
        "pde.csv",
        ["d", "width", "depth", "activation", "iterations", "l2", "linf", "rel_l2", "seconds"],
        [[prob["dim"], prob["width"], prob["depth"], prob["activation"], est.n_iter_,
          _fmt(err["l2"]), _fmt(err["linf"]), _fmt(err["rel_l2"]), f"{seconds:.3f}"]],
    )
    for axis, (t, pred, exact) in est.profiles(prob["n_profile"]).items():
        out.columns(f"profile_x{axis + 1}_predicted.txt", t, pred)
        out.columns(f"profile_x{axis + 1}_exact.txt", t, exact)
    if est.loss_curve_:
        it, loss = zip(*est.loss_curve_)
        out.columns("loss_curve.txt", it, loss)
    if "jsonl" in out.formats:
        save_model(out._path("model.json"), est.mlp_spec_, est.coef_)
    return out


def cmd_stability(doc, workers):
    opt, prob = doc["optimizer"], doc["problem"]
    b1, b2 = opt.get("beta1", 0.9), opt.get("beta2", 0.99)
    try:
        systems = [StabilityParams(b1, b2, mu) for mu in prob["mu"]]
    except UsageError as exc:
        raise ConfigError("problem.mu", str(exc)) from exc

    eig_rows, decay_rows = [], []
    for p in systems:
        eig = closed_form_eigenvalues(p)
        for k, ev in enumerate(eig):
            eig_rows.append([_fmt(p.mu), k, _fmt(ev.real), _fmt(ev.imag)])
        # x~ only sees the oscillatory pair; the v mode decays on its own
        traj = simulate_linearized(p, (0.0, 0.0, 1.0), prob["horizon"])
        decay_rows.append(["adam_cbo", _fmt(p.mu), _fmt(-eig.real.max()), _fmt(-eig[1].real),
                           _fmt(traj.decay_rate), _fmt(abs(eig[1].imag)), _fmt(traj.frequency)])
    for lam in prob["cbo_lambda"]:
        _, _, rate = cbo_linear_decay(lam)
        decay_rows.append(["cbo", _fmt(lam), _fmt(lam), _fmt(lam), _fmt(rate), _fmt(0.0), _fmt(0.0)])

    out = Emitter(doc)
    out.table("eigenvalues.csv", ["mu", "index", "real", "imag"], eig_rows)
    out.table("decay.csv", ["system", "parameter", "slowest_rate", "x_rate", "x_rate_fitted", "frequency", "frequency_fitted"], decay_rows)
    return out


def cmd_scaling(doc, workers):
    prob, seed = doc["problem"], doc["trials"]["seed"]
    if prob["M"] > prob["N"]:
        raise ConfigError("problem.M", f"batch size {prob['M']} > N {prob['N']}")
    rep = scaling_probe(prob["dims"], prob["N"], prob["M"], prob["iterations"], prob["repeats"], seed)
    out = Emitter(doc)
    out.table("timing.csv", ["d", "seconds_per_iter"], [[d, f"{s:.6e}"] for d, s in zip(rep.dims, rep.seconds_per_iter)])
    ratio = rep.seconds_per_iter[-1] / rep.seconds_per_iter[0]
    out.table("fit.csv", ["slope", "intercept", "r_squared", "ratio_last_first"],
              [[f"{rep.slope:.6e}", f"{rep.intercept:.6e}", f"{rep.r_squared:.6f}", f"{ratio:.4f}"]])
    return out


def _builtin(prob):
    shift, offset = prob["shift"], prob["offset"]
    if prob["function"] == "rastrigin":
        return rastrigin_objective(RastriginSpec(prob["dim"], shift, offset))

    def sphere(X):
        y = np.asarray(X, dtype=float) - shift
        return np.einsum("...i,...i->...", y, y) / y.shape[-1] + offset

    return Objective(sphere, prob["dim"], vectorized=True)


def cmd_optimize(doc, workers):
    opt, prob, seed = doc["optimizer"], doc["problem"], doc["trials"]["seed"]
    params = optimizer_params(opt)
    if not prob["init_low"] < prob["init_high"]:
        raise ConfigError("problem.init_low", "must be below init_high")
    obj = _builtin(prob)
    streams = make_streams(seed, ("init", "run"))
    if doc["trials"]["init"] == "zeros":
        init = np.zeros((params.n_particles, prob["dim"]))
    else:
        init = streams["init"].uniform(prob["init_low"], prob["init_high"], size=(params.n_particles, prob["dim"]))
    run = run_cbo if isinstance(params, CboParams) else run_adam_cbo
    t0 = time.perf_counter()
    res = run(obj, init, params, streams["run"], workers=workers, trace_every=prob["trace_every"])
    seconds = time.perf_counter() - t0
    f_star = float(obj(res.x_star))
    dist = float(np.abs(res.x_star - prob["shift"]).max())

    out = Emitter(doc)
    kind = "cbo" if isinstance(params, CboParams) else "adam_cbo"
    out.table("result.csv", ["function", "d", "optimizer", "iterations", "f_star", "max_abs_error", "seconds"],
              [[prob["function"], prob["dim"], kind, res.n_iter, _fmt(f_star), _fmt(dist), f"{seconds:.3f}"]])
    fh = out.jsonl("trace.jsonl", (_jsonable(r.as_dict()) for r in res.trace))
    if fh is not None:
        fh.close()
    out.columns("x_star.txt", np.arange(prob["dim"]), res.x_star)
    return out


def _jsonable(d):
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


COMMANDS = {
    "rastrigin-bench": (cmd_rastrigin_bench, "success rates on shifted Rastrigin functions"),
    "fit-function": (cmd_fit_function, "fit a 1-D target with a network trained by Adam-CBO"),
    "solve-pde": (cmd_solve_pde, "Deep Ritz solution of the singular diffusion problem"),
    "stability": (cmd_stability, "eigenvalues and decay rates of the linearized dynamics"),
    "scaling": (cmd_scaling, "per-iteration time against dimension with a linear fit"),
    "optimize": (cmd_optimize, "minimize a built-in objective"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="adamcbo", description="Consensus-based global optimization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH", help="YAML or JSON configuration document")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides trials.seed)")
        p.add_argument("--sequential", action="store_true", help="single worker, canonical order")
        p.add_argument("--workers", type=int, metavar="K", help="worker count (default: available cores)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    func = COMMANDS[args.command][0]
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers", f"must be >= 1, got {args.workers}")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        workers = 1 if args.sequential else (args.workers or os.cpu_count() or 1)
        user = load_config(args.config) if args.config else {}
        doc = resolve(args.command, user, seed=args.seed, out=args.out)
        out = func(doc, workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        print("interrupted; rows already written were kept", file=sys.stderr)
        return EXIT_INTERRUPT
    for path in out.written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
