"""Forward homodyne model.

Quadrature convention: ``x = (a + a^dag) / sqrt(2)`` with vacuum variance 1/2.
A local-oscillator phase pair ``(phi1, phi2)`` measures the state rotated by
``exp(i (phi1 n1 + phi2 n2))``, i.e. ``p(x1, x2) = <x1,x2| R rho R^dag |x1,x2>``.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .fock import DensityMatrix

TWO_PI = 2.0 * math.pi
VACUUM_VARIANCE = 0.5
SAMPLING_GRID = np.linspace(-6.0, 6.0, 4001)


class GridError(ValueError):
    """The evaluation grid is too narrow or too coarse for the requested check."""


class AmbiguousModeError(ValueError):
    """No single dominant temporal mode in a trace ensemble."""


@dataclass(frozen=True)
class HomodyneBasis:
    phi1: float
    phi2: float

    def __post_init__(self):
        object.__setattr__(self, "phi1", float(self.phi1) % TWO_PI)
        object.__setattr__(self, "phi2", float(self.phi2) % TWO_PI)

    @property
    def relative_phase(self) -> float:
        return (self.phi1 - self.phi2) % TWO_PI


def default_bases(n_phases: int = 7) -> list[HomodyneBasis]:
    """Cartesian grid of ``n_phases`` equally spaced LO phases in [0, pi) per mode."""
    phis = np.arange(n_phases) * math.pi / n_phases
    return [HomodyneBasis(a, b) for a in phis for b in phis]


@dataclass(frozen=True)
class QuadratureBatch:
    """Joint quadrature samples ``(x1, x2)`` recorded in one LO basis."""

    basis: HomodyneBasis
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float).reshape(-1, 2)
        if arr.shape[0] == 0:
            raise ValueError("a quadrature batch needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("quadrature samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]


def hermite_functions(x: np.ndarray, cutoff: int) -> np.ndarray:
    """``<x|n>`` for ``n = 0..cutoff``, shape ``(cutoff + 1,) + x.shape``.

    Uses the three-term recurrence, which stays stable far into the tails.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((cutoff + 1,) + x.shape)
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if cutoff >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, cutoff):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def rotated_wavefunctions(x: np.ndarray, phi: float, cutoff: int) -> np.ndarray:
    """``<x| e^{i phi n} |n> = e^{i phi n} <x|n>``."""
    phase = np.exp(1j * phi * np.arange(cutoff + 1))
    return phase.reshape((-1,) + (1,) * np.ndim(x)) * hermite_functions(x, cutoff)


def _check_grid(x: np.ndarray, name: str) -> None:
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
        raise GridError(f"{name} must be a strictly increasing 1-D grid")
    if x[0] > -5.0 or x[-1] < 5.0:
        raise GridError(f"{name} must span at least [-5, 5], got [{x[0]:g}, {x[-1]:g}]")


def quadrature_pdf(rho: DensityMatrix, basis: HomodyneBasis, x1: np.ndarray,
                   x2: np.ndarray, check_norm: bool = True) -> np.ndarray:
    """Joint quadrature density on the lattice ``x1 x x2`` (shape ``len(x1), len(x2)``)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if check_norm:
        _check_grid(x1, "x1")
        _check_grid(x2, "x2")
    w1 = rotated_wavefunctions(x1, basis.phi1, rho.cutoff)
    w2 = rotated_wavefunctions(x2, basis.phi2, rho.cutoff)
    t = rho.tensor()
    pdf = np.einsum("ai,bj,abcd,ci,dj->ij", w1, w2, t, w1.conj(), w2.conj(), optimize=True).real
    if check_norm:
        total = trapezoid(trapezoid(pdf, x2, axis=1), x1)
        if abs(total - 1.0) > 1e-6:
            raise GridError(f"pdf integrates to {total:.9f} on this grid; refine or widen it")
    return pdf


def marginal_pdf(rho_single: np.ndarray, phi: float, x: np.ndarray) -> np.ndarray:
    """Quadrature density of a single-mode density matrix."""
    cutoff = rho_single.shape[0] - 1
    w = rotated_wavefunctions(np.asarray(x, dtype=float), phi, cutoff)
    return np.einsum("ai,ab,bi->i", w, rho_single, w.conj()).real


def _conditional_weights(rho: DensityMatrix, basis: HomodyneBasis, x1: np.ndarray) -> np.ndarray:
    """``B[s, n2, m2]`` such that ``p(x1_s, x2) = sum B psi_n2(x2) psi_m2(x2)``."""
    c = rho.cutoff + 1
    w1 = rotated_wavefunctions(x1, basis.phi1, rho.cutoff)
    ph2 = np.exp(1j * basis.phi2 * np.arange(c))
    b = np.einsum("as,abcd,cs->sbd", w1, rho.tensor(), w1.conj(), optimize=True)
    return (b * ph2[None, :, None] * ph2.conj()[None, None, :]).real


def stage_rng(seed: int, stage: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stage, index)``, stable across runs."""
    key = int.from_bytes(hashlib.sha256(stage.encode()).digest()[:4], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, int(index)]))


def sample_quadratures(rho: DensityMatrix, basis: HomodyneBasis, n: int,
                       seed=None, grid: np.ndarray = SAMPLING_GRID) -> QuadratureBatch:
    """Draw ``n`` i.i.d. joint samples by inverse-CDF on ``x1`` then ``x2 | x1``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    c = rho.cutoff + 1
    u1 = rng.random(n)
    u2 = rng.random(n)

    p1 = marginal_pdf(rho.reduced(1), basis.phi1, grid)
    cdf1 = cumulative_trapezoid(np.clip(p1, 0.0, None), grid, initial=0.0)
    x1 = np.interp(u1 * cdf1[-1], cdf1, grid)

    psi = hermite_functions(grid, rho.cutoff)
    kern = cumulative_trapezoid(psi[:, None, :] * psi[None, :, :], grid, initial=0.0, axis=-1)
    kern = kern.reshape(c * c, -1)
    weights = _conditional_weights(rho, basis, x1).reshape(n, c * c)

    def cdf_at(j):
        return np.einsum("sk,ks->s", weights, kern[:, j])

    total = cdf_at(np.full(n, grid.size - 1))
    target = u2 * total
    lo = np.zeros(n, dtype=int)
    hi = np.full(n, grid.size - 1)
    while np.any(hi - lo > 1):
        mid = (lo + hi) // 2
        below = cdf_at(mid) <= target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    f_lo, f_hi = cdf_at(lo), cdf_at(hi)
    frac = np.where(f_hi > f_lo, (target - f_lo) / np.where(f_hi > f_lo, f_hi - f_lo, 1.0), 0.5)
    x2 = grid[lo] + np.clip(frac, 0.0, 1.0) * (grid[hi] - grid[lo])
    return QuadratureBatch(basis, np.column_stack([x1, x2]))


def sample_plan(rho: DensityMatrix, bases: Sequence[HomodyneBasis], n: int, seed: int,
                stage: str = "measure", workers: int = 1) -> list[QuadratureBatch]:
    """Sample every basis from its own substream; result independent of ``workers``."""
    def one(k):
        return sample_quadratures(rho, bases[k], n, stage_rng(seed, stage, k))

    if workers <= 1:
        return [one(k) for k in range(len(bases))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(bases))))


# -- temporal modes ----------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    """Discretized wave-packet envelope with ``sum(values**2) * dt == 1``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1 or times.size < 2:
            raise ValueError("times and values must be 1-D arrays of equal length")
        steps = np.diff(times)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps[0]:
            raise ValueError("envelope grid must be uniform")
        norm = float(np.sum(values ** 2) * steps[0])
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"envelope not normalized (integral of square = {norm:.12g})")
        if values[np.argmax(np.abs(values))] < 0:
            values = -values
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def from_samples(cls, times: np.ndarray, values: np.ndarray) -> "Envelope":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        dt = times[1] - times[0]
        norm = math.sqrt(float(np.sum(values ** 2) * dt))
        if norm == 0.0:
            raise ValueError("envelope is identically zero")
        return cls(times, values / norm)

    @classmethod
    def exponential(cls, times: np.ndarray, gamma: float, t0: float) -> "Envelope":
        """One-sided decay ``theta(t - t0) exp(-gamma (t - t0) / 2)``."""
        times = np.asarray(times, dtype=float)
        rel = times - t0
        values = np.where(rel >= -1e-15, np.exp(-0.5 * gamma * np.clip(rel, 0.0, None)), 0.0)
        return cls.from_samples(times, values)

    def overlap(self, other: "Envelope") -> float:
        _check_same_grid(self.times, other.times)
        return float(np.sum(self.values * other.values) * self.dt)


@dataclass(frozen=True)
class TraceEnsemble:
    """Raw homodyne traces of one mode: ``traces[event, time]``."""

    times: np.ndarray
    traces: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        traces = np.asarray(self.traces, dtype=float)
        if traces.ndim != 2 or traces.shape[1] != len(self.times):
            raise ValueError("every trace must share the time grid")
        if len(self.phases) != traces.shape[0]:
            raise ValueError("one LO phase per trace is required")
        object.__setattr__(self, "traces", traces)

    def __len__(self) -> int:
        return self.traces.shape[0]


def _check_same_grid(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape or not np.allclose(a, b, rtol=0.0, atol=1e-15 + 1e-9 * np.max(np.abs(a))):
        raise ValueError("time grids do not match")


def project_trace(trace: np.ndarray, envelope: Envelope, times: Optional[np.ndarray] = None) -> np.ndarray:
    """Weighted integral ``sum(psi * x) dt``; accepts one trace or a stack of them."""
    trace = np.asarray(trace, dtype=float)
    if trace.shape[-1] != envelope.values.size:
        raise ValueError("trace length does not match the envelope grid")
    if times is not None:
        _check_same_grid(np.asarray(times, dtype=float), envelope.times)
    return trace @ envelope.values * envelope.dt


def _embed_quadratures(x: np.ndarray, envelope: Envelope, rng: np.random.Generator) -> np.ndarray:
    dt = envelope.dt
    noise = rng.normal(0.0, math.sqrt(VACUUM_VARIANCE / dt), size=(x.size, envelope.values.size))
    noise -= np.outer(noise @ envelope.values * dt, envelope.values)
    return noise + np.outer(x, envelope.values)


def simulate_traces(rho: DensityMatrix, envelopes: tuple[Envelope, Envelope],
                    bases: Sequence[HomodyneBasis], n: int, seed: int,
                    stage: str = "traces") -> tuple[TraceEnsemble, TraceEnsemble]:
    """Continuous homodyne records for both modes.

    Each trace is the envelope times the signal quadrature plus white vacuum
    noise restricted to the envelope's orthogonal complement, so projecting
    onto the envelope returns the signal quadrature.
    """
    _check_same_grid(envelopes[0].times, envelopes[1].times)
    rows1, rows2, ph1, ph2 = [], [], [], []
    for k, basis in enumerate(bases):
        batch = sample_quadratures(rho, basis, n, stage_rng(seed, stage + ":quad", k))
        rng = stage_rng(seed, stage + ":noise", k)
        rows1.append(_embed_quadratures(batch.samples[:, 0], envelopes[0], rng))
        rows2.append(_embed_quadratures(batch.samples[:, 1], envelopes[1], rng))
        ph1.append(np.full(n, basis.phi1))
        ph2.append(np.full(n, basis.phi2))
    times = envelopes[0].times
    return (TraceEnsemble(times, np.vstack(rows1), np.concatenate(ph1)),
            TraceEnsemble(times, np.vstack(rows2), np.concatenate(ph2)))


def extract_envelope_pca(ensemble: TraceEnsemble, min_traces: int = 100) -> Envelope:
    """Leading eigenvector of the vacuum-subtracted autocorrelation matrix."""
    n, m = ensemble.traces.shape
    if n < min_traces:
        raise ValueError(f"need at least {min_traces} traces, got {n}")
    dt = float(ensemble.times[1] - ensemble.times[0])
    x = ensemble.traces
    vac = VACUUM_VARIANCE / dt
    corr = x.T @ x / n - vac * np.eye(m)
    lam, vec = np.linalg.eigh(corr)
    lead, second = lam[-1], lam[-2]
    # largest excess expected from vacuum alone (Marchenko-Pastur edge)
    noise_edge = vac * ((1.0 + math.sqrt(m / n)) ** 2 - 1.0)
    if lead <= 0.0 or lead - second < 0.01 * lead or lead < 2.0 * noise_edge:
        raise AmbiguousModeError(
            f"no dominant temporal mode (leading {lead:.4g}, second {second:.4g}, "
            f"vacuum edge {noise_edge:.4g})")
    return Envelope.from_samples(ensemble.times, vec[:, -1])


def envelope_delay(a: Envelope, b: Envelope) -> float:
    """Lag (seconds) maximizing the cross-correlation of ``b`` against ``a``."""
    _check_same_grid(a.times, b.times)
    xc = np.correlate(b.values, a.values, mode="full")
    lag = int(np.argmax(xc)) - (a.values.size - 1)
    return lag * a.dt
