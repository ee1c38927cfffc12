"""Flat ``key = value`` experiment configuration.

Lines starting with ``#`` are comments. Times are in seconds, rates in counts
per second, angles in radians. Unknown keys are rejected. Every key and its
default is listed in ``DEFAULTS``; ``dualrail config`` prints them.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .channels import DecayModel, DephasingParams, ReleaseSchedule
from .fock import BeamSplitterParams
from .homodyne import Envelope, default_bases
from .source import FakeCountParams, SourceParams
from .tomography import TomographyPlan


class ConfigError(ValueError):
    """A configuration entry is malformed or outside its allowed range."""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: Optional[int] = None
    # source
    q1: float = 0.1
    q2: float = 0.1
    theta: float = 0.0
    bs_reflectivity: float = 0.5
    source_cutoff: int = 2
    # heralds; l_fake = none derives it from the two rates
    l_fake: Optional[float] = None
    herald_rate: float = 400.0
    fake_rate: float = 10.0
    duty_cycle: float = 0.5
    # storage
    eta0_1: float = 1.0
    tau_1: float = 1.42e-6
    eta0_2: float = 1.0
    tau_2: float = 1.29e-6
    sigma: float = 0.0
    t1: float = 0.0
    t2: float = 0.0
    detuning_hz: float = 300e3
    # homodyne / tomography
    n_phases: int = 7
    samples_per_basis: int = 3000
    tomo_cutoff: int = 3
    max_iterations: int = 2000
    convergence_tol: float = 1e-6
    bootstrap_resamples: int = 0
    # temporal envelope
    envelope_gamma: float = 7.5e6
    envelope_latency: float = 40e-9
    envelope_dt: float = 40e-9
    envelope_span: float = 1.2e-6
    # execution
    workers: int = 1
    out_dir: str = "out"

    def validate(self) -> "ExperimentConfig":
        if self.seed is None:
            raise ConfigError("seed is mandatory (set 'seed' or pass --seed)")
        try:
            self.source_params()
            self.fake_params()
            self.decay_models()
            self.dephasing()
            self.schedule()
            self.plan()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.bootstrap_resamples and self.bootstrap_resamples < 50:
            raise ConfigError("bootstrap_resamples must be 0 (off) or >= 50")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ConfigError("duty_cycle must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def source_params(self) -> SourceParams:
        bs = BeamSplitterParams.from_reflectivity(self.bs_reflectivity)
        return SourceParams(self.q1, self.q2, self.theta, bs, self.source_cutoff)

    def fake_params(self) -> FakeCountParams:
        if self.l_fake is not None:
            return FakeCountParams(self.l_fake)
        return FakeCountParams.from_rates(self.herald_rate, self.fake_rate)

    def decay_models(self) -> tuple[DecayModel, DecayModel]:
        return DecayModel(self.eta0_1, self.tau_1), DecayModel(self.eta0_2, self.tau_2)

    def dephasing(self) -> DephasingParams:
        return DephasingParams(self.sigma)

    def schedule(self) -> ReleaseSchedule:
        return ReleaseSchedule(self.t1, self.t2, 2.0 * math.pi * self.detuning_hz)

    def plan(self) -> TomographyPlan:
        return TomographyPlan(tuple(default_bases(self.n_phases)), self.samples_per_basis,
                              self.tomo_cutoff, self.max_iterations, self.convergence_tol)

    def envelope_grid(self) -> np.ndarray:
        n = int(round(self.envelope_span / self.envelope_dt)) + 1
        return np.arange(n) * self.envelope_dt

    def envelope(self, release_time: float) -> Envelope:
        return Envelope.exponential(self.envelope_grid(), self.envelope_gamma,
                                    self.envelope_latency + release_time)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def items(self) -> list[tuple[str, object]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def to_text(self) -> str:
        lines = []
        for key, val in self.items():
            lines.append(f"{key} = {_render(val)}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


DEFAULTS = ExperimentConfig()
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _render(val) -> str:
    if val is None:
        return "none"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _parse(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    if raw.lower() in ("none", "auto", ""):
        if "Optional" in kind:
            return None
        raise ConfigError(f"{key} requires a value")
    try:
        if "int" in kind:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if "float" in kind:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
