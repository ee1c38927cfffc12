"""Figures of merit and storage estimators for reconstructed states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
from scipy.special import eval_genlaguerre

from .channels import DecayModel, LossParams
from .fock import (
    DUAL_RAIL_SUBSPACE,
    DegenerateInputError,
    DensityMatrix,
    partial_transpose,
    subspace_renormalize,
)

EIG_ZERO_TOL = 1e-12
RATIO_TOL = 1e-6


class DiagnosticsError(ValueError):
    """Input is unphysical for the requested estimator."""


class UnwrapAmbiguityError(ValueError):
    """Consecutive phases are too far apart to unwrap reliably."""


# -- negativity ---------------------------------------------------------------

def log_negativity(mat: np.ndarray, cutoff: int, mode: int = 2) -> float:
    """Raw ``log2`` trace norm of the partial transpose (may dip below 0 numerically)."""
    pt = partial_transpose(mat, mode=mode, cutoff=cutoff)
    lam = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
    lam[np.abs(lam) <= EIG_ZERO_TOL] = 0.0
    return math.log2(float(np.sum(np.abs(lam))))


def log_negativity_subspace(rho: DensityMatrix, mode: int = 2, raw: bool = False) -> float:
    """Log-negativity of ``rho`` restricted to ``{|0,0>, |0,1>, |1,0>, |1,1>}``.

    The projection is renormalized before the partial transpose. The result is
    clamped at zero unless ``raw`` is set.
    """
    sub = subspace_renormalize(rho, DUAL_RAIL_SUBSPACE).truncate(1)
    value = log_negativity(sub.elements, 1, mode)
    return value if raw else max(value, 0.0)


# -- Wigner function ----------------------------------------------------------

def _single_mode_wigner(cutoff: int, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``W[m, n, ...]`` for the operator ``|m><n|``, normalized so that ``int W = 1``.

    For ``m >= n``::

        W_mn = (-1)^n / pi * sqrt(n!/m!) * (sqrt(2) (x - i p))^(m - n)
               * L_n^(m - n)(2 r^2) * exp(-r^2)

    and ``W_nm = conj(W_mn)``.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    r2 = x * x + p * p
    z = math.sqrt(2.0) * (x - 1j * p)
    gauss = np.exp(-r2) / math.pi
    out = np.zeros((cutoff + 1, cutoff + 1) + np.broadcast(x, p).shape, dtype=complex)
    for m in range(cutoff + 1):
        for n in range(m + 1):
            coef = (-1) ** n * math.sqrt(math.factorial(n) / math.factorial(m))
            val = coef * z ** (m - n) * eval_genlaguerre(n, m - n, 2.0 * r2) * gauss
            out[m, n] = val
            out[n, m] = np.conj(val)
    return out


def wigner(rho: DensityMatrix, x1, p1, x2, p2) -> np.ndarray:
    """Two-mode Wigner function on the grid ``x1 x p1 x x2 x p2`` (4-D array)."""
    xx1, pp1 = np.meshgrid(np.asarray(x1, float), np.asarray(p1, float), indexing="ij")
    xx2, pp2 = np.meshgrid(np.asarray(x2, float), np.asarray(p2, float), indexing="ij")
    w1 = _single_mode_wigner(rho.cutoff, xx1, pp1)
    w2 = _single_mode_wigner(rho.cutoff, xx2, pp2)
    # element |n1,n2><m1,m2| contributes W_{n1 m1}(x1,p1) W_{n2 m2}(x2,p2)
    out = np.einsum("abcd,acij,bdkl->ijkl", rho.tensor(), w1, w2, optimize=True)
    return out.real


def wigner_cross_section(rho: DensityMatrix, x, p) -> np.ndarray:
    """``W(X, P, X, P)`` on the grid ``x x p``."""
    xx, pp = np.meshgrid(np.asarray(x, float), np.asarray(p, float), indexing="ij")
    w = _single_mode_wigner(rho.cutoff, xx, pp)
    return np.einsum("abcd,acij,bdij->ij", rho.tensor(), w, w, optimize=True).real


def wigner_origin(rho: DensityMatrix) -> float:
    """``W(0, 0, 0, 0) = sum (-1)^(n1+n2) rho_{n1 n2, n1 n2} / pi^2``."""
    c = rho.cutoff + 1
    n = np.arange(c)
    parity = ((-1.0) ** (n[:, None] + n[None, :])).reshape(-1)
    return float(np.real(np.diag(rho.elements)) @ parity) / math.pi ** 2


# -- estimators ---------------------------------------------------------------

def estimate_amplitudes(rho: DensityMatrix, losses: LossParams,
                        normalize: bool = True) -> tuple[float, float]:
    """Loss-corrected amplitudes of ``alpha |0,1> + beta e^{i theta} |1,0>``.

    ``|0,1>`` keeps its photon in mode 2 and is attenuated by ``1 - l2``;
    ``|1,0>`` by ``1 - l1``. With ``normalize=False`` the raw ratios
    ``sqrt(rho_diag / (1 - L))`` are returned.
    """
    p01 = rho.population(0, 1)
    p10 = rho.population(1, 0)
    if p01 <= 0.0 and p10 <= 0.0:
        raise DegenerateInputError("both one-photon populations vanish")
    a2 = max(p01, 0.0) / (1.0 - losses.l2) if losses.l2 < 1.0 else 0.0
    b2 = max(p10, 0.0) / (1.0 - losses.l1) if losses.l1 < 1.0 else 0.0
    if normalize:
        total = a2 + b2
        if total == 0.0:
            raise DegenerateInputError("no surviving one-photon population")
        a2, b2 = a2 / total, b2 / total
    return math.sqrt(a2), math.sqrt(b2)


def coherence_ratio(rho: DensityMatrix) -> float:
    """``|rho_{01,10}| / sqrt(rho_{01,01} rho_{10,10})``."""
    p01 = rho.population(0, 1)
    p10 = rho.population(1, 0)
    if p01 <= 0.0 or p10 <= 0.0:
        raise DiagnosticsError("one-photon populations must both be positive")
    return abs(rho.element((0, 1), (1, 0))) / math.sqrt(p01 * p10)


def estimate_dephasing(rho: DensityMatrix) -> float:
    """Gaussian phase-noise width from ``exp(-sigma^2/2) = coherence ratio``.

    Returns ``inf`` when the coherence vanishes.
    """
    ratio = coherence_ratio(rho)
    if ratio > 1.0 + RATIO_TOL:
        raise DiagnosticsError(f"coherence ratio {ratio:.8f} exceeds 1")
    if ratio <= 0.0:
        return math.inf
    return math.sqrt(-2.0 * math.log(min(ratio, 1.0)))


def state_phase(rho: DensityMatrix) -> float:
    """``arg <1,0| rho |0,1>``, the ``theta`` of the dual-rail superposition."""
    return float(np.angle(rho.element((1, 0), (0, 1))))


def fit_phase_rotation(series: Sequence[tuple[float, DensityMatrix]],
                       max_step: float = math.pi / 2) -> float:
    """Rotation frequency (Hz) from the slope of the unwrapped state phase vs delay.

    Points are sorted by delay; a wrapped step larger than ``max_step`` between
    neighbours is treated as ambiguous.
    """
    if len(series) < 3:
        raise ValueError("need at least three (delay, state) points")
    pts = sorted(series, key=lambda item: item[0])
    delays = np.array([d for d, _ in pts], dtype=float)
    phases = np.array([state_phase(r) for _, r in pts])
    return fit_phase_slope(delays, phases, max_step)


def fit_phase_slope(delays: np.ndarray, phases: np.ndarray, max_step: float = math.pi / 2) -> float:
    steps = np.angle(np.exp(1j * np.diff(phases)))
    if np.any(np.abs(steps) > max_step):
        raise UnwrapAmbiguityError("phase changes too fast between delays; sample more densely")
    unwrapped = phases[0] + np.concatenate([[0.0], np.cumsum(steps)])
    slope, _ = np.polyfit(delays, unwrapped, 1)
    return float(slope / (2.0 * math.pi))


def fit_exponential_decay(points: Sequence[tuple[float, float]]) -> DecayModel:
    """Least squares of ``ln(fraction) = ln(eta0) - t / tau``."""
    if len(points) < 2:
        raise ValueError("need at least two points")
    t = np.array([p[0] for p in points], dtype=float)
    f = np.array([p[1] for p in points], dtype=float)
    if np.any(f <= 0.0):
        raise ValueError("fractions must be positive")
    if np.ptp(t) == 0.0:
        raise ValueError("need at least two distinct times")
    slope, intercept = np.polyfit(t, np.log(f), 1)
    if slope >= 0.0:
        raise ValueError("fractions do not decay")
    eta0 = math.exp(intercept)
    if eta0 > 1.0 + 1e-12:
        raise ValueError(f"fitted base efficiency {eta0:.4f} exceeds 1")
    return DecayModel(min(eta0, 1.0), -1.0 / slope)


# -- reporting ----------------------------------------------------------------

def default_metrics() -> dict:
    return {
        "log_negativity": log_negativity_subspace,
        "wigner_origin": wigner_origin,
        "sigma": lambda r: estimate_dephasing(r.truncate(1)),
        "phase": state_phase,
    }


@dataclass
class AnalysisReport:
    log_negativity: float
    log_negativity_raw: float
    wigner_origin: float
    sigma: float
    alpha: Optional[float] = None
    beta: Optional[float] = None
    phase: float = 0.0
    errors: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def items(self) -> list[tuple[str, object]]:
        out = []
        for key, val in asdict(self).items():
            if key in ("errors", "extra"):
                continue
            out.append((key, val))
        out += [(f"{k}_err", v) for k, v in sorted(self.errors.items())]
        out += sorted(self.extra.items())
        return out


def analyze(rho: DensityMatrix, losses: Optional[LossParams] = None) -> AnalysisReport:
    """Point estimates of every reported metric for one state."""
    sub = subspace_renormalize(rho, DUAL_RAIL_SUBSPACE).truncate(1)
    try:
        sigma = estimate_dephasing(sub)
    except DiagnosticsError:
        sigma = math.nan
    alpha = beta = None
    if losses is not None:
        alpha, beta = estimate_amplitudes(sub, losses)
    return AnalysisReport(
        log_negativity=log_negativity_subspace(rho),
        log_negativity_raw=log_negativity_subspace(rho, raw=True),
        wigner_origin=wigner_origin(rho),
        sigma=sigma,
        alpha=alpha,
        beta=beta,
        phase=state_phase(rho),
    )
