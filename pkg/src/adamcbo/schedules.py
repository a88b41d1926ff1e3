"""Noise processes, geometric sigma decay, and staged training plans."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import UsageError

__all__ = [
    "NOISE_KINDS",
    "NoiseProcess",
    "SigmaSchedule",
    "Phase",
    "PhasePlan",
    "sample_noise",
    "sigma_at",
    "phase_at",
]

NOISE_KINDS = ("gaussian", "uniform", "wiener")


@dataclass(frozen=True)
class NoiseProcess:
    """Per-component noise distribution.

    ``gaussian`` is N(0, 1), ``uniform`` is U(-1, 1) and ``wiener`` is a
    Brownian increment ``sqrt(dt) * N(0, 1)``.
    """

    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise UsageError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")

    def sample(self, shape, rng, dt=1.0):
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "uniform":
            return rng.uniform(-1.0, 1.0, size=shape)
        return np.sqrt(dt) * rng.standard_normal(shape)


def _noise(process):
    return process if isinstance(process, NoiseProcess) else NoiseProcess(str(process))


def sample_noise(process, dim, dt, rng):
    """One i.i.d. noise vector of length ``dim``."""
    if int(dim) < 1:
        raise UsageError(f"dim must be >= 1, got {dim}")
    if not dt > 0:
        raise UsageError(f"dt must be > 0, got {dt}")
    return _noise(process).sample(int(dim), rng, dt)


@dataclass(frozen=True)
class SigmaSchedule:
    """``sigma_t = base ** (t / period)``."""

    base: float = 0.99
    period: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.base <= 1.0:
            raise UsageError(f"sigma base must be in (0, 1], got {self.base}")
        if not self.period > 0:
            raise UsageError(f"sigma period must be > 0, got {self.period}")

    def __call__(self, t):
        return sigma_at(self, t)


def sigma_at(schedule, t):
    if t < 0:
        raise UsageError(f"iteration must be >= 0, got {t}")
    return schedule.base ** (t / schedule.period)


@dataclass(frozen=True)
class Phase:
    """Hyper-parameters active on the half-open iteration range ``[start, end)``.

    ``lam`` and ``batch_size`` of None mean "keep the optimizer's own value";
    ``sigma`` overrides the sigma schedule when given.
    """

    start: int
    end: int
    lam: float | None = None
    batch_size: int | None = None
    noise_enabled: bool = True
    sigma: SigmaSchedule | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise UsageError(f"phase range [{self.start}, {self.end}) is empty or negative")
        if self.lam is not None and not self.lam > 0:
            raise UsageError(f"phase lambda must be > 0, got {self.lam}")
        if self.batch_size is not None and self.batch_size < 1:
            raise UsageError(f"phase batch size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class PhasePlan:
    """Contiguous phases covering ``[0, t_N)``."""

    phases: tuple = field(default_factory=tuple)

    def __post_init__(self):
        phases = tuple(self.phases)
        object.__setattr__(self, "phases", phases)
        if not phases:
            raise UsageError("a phase plan needs at least one phase")
        if phases[0].start != 0:
            raise UsageError(f"first phase must start at 0, got {phases[0].start}")
        for a, b in zip(phases, phases[1:]):
            if a.end != b.start:
                raise UsageError(f"phases [{a.start}, {a.end}) and [{b.start}, {b.end}) are not contiguous")

    @property
    def total(self):
        return self.phases[-1].end

    @property
    def starts(self):
        return [p.start for p in self.phases]

    def scaled(self, factor):
        """Copy with every boundary multiplied by ``factor`` (rounded, kept contiguous)."""
        ends = [max(1, round(p.end * factor)) for p in self.phases]
        out, start = [], 0
        for p, end in zip(self.phases, ends):
            end = max(end, start + 1)
            out.append(replace(p, start=start, end=end))
            start = end
        return PhasePlan(tuple(out))

    @classmethod
    def single(cls, t_max, **kwargs):
        return cls((Phase(0, int(t_max), **kwargs),))


def phase_at(plan, t):
    """The unique phase whose ``[start, end)`` contains ``t``."""
    if not 0 <= t < plan.total:
        raise UsageError(f"iteration {t} outside plan range [0, {plan.total})")
    return plan.phases[bisect.bisect_right(plan.starts, t) - 1]
