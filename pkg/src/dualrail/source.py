"""Single-click heralding from a two-NOPO source, plus fake-count mixing."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fock import (
    BeamSplitterParams,
    DegenerateInputError,
    DensityMatrix,
    PureState,
    apply_beamsplitter,
    _check_cutoff,
)

WEAK_PUMP_LIMIT = 0.3

# mode order of the four-mode intermediate state
S1, I1, S2, I2 = 1, 2, 3, 4


class HeraldImpossibleError(DegenerateInputError):
    """The heralding projection has zero probability."""


@dataclass(frozen=True)
class SourceParams:
    q1: float
    q2: float
    theta: float = 0.0
    bs: BeamSplitterParams = BeamSplitterParams(np.sqrt(0.5), np.sqrt(0.5))
    cutoff: int = 2

    def __post_init__(self):
        _check_cutoff(self.cutoff)
        for name in ("q1", "q2"):
            q = getattr(self, name)
            if not -1.0 < q < 1.0:
                raise ValueError(f"{name} must lie in (-1, 1), got {q!r}")
        if self.cutoff > 3:
            raise ValueError("four-mode source state is limited to cutoff <= 3")

    @property
    def weak_pump(self) -> bool:
        return max(abs(self.q1), abs(self.q2)) <= WEAK_PUMP_LIMIT


@dataclass(frozen=True)
class FakeCountParams:
    l_fake: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.l_fake <= 1.0:
            raise ValueError(f"l_fake must lie in [0, 1], got {self.l_fake!r}")

    @classmethod
    def from_rates(cls, herald_rate: float, fake_rate: float) -> "FakeCountParams":
        """Fraction of heralds caused by stray light."""
        if herald_rate < 0 or fake_rate < 0 or herald_rate + fake_rate == 0:
            raise ValueError("rates must be non-negative and not both zero")
        return cls(fake_rate / (herald_rate + fake_rate))


def initial_state(p: SourceParams) -> PureState:
    """Normalized product of two truncated two-mode squeezers on (s1, i1, s2, i2)."""
    c = p.cutoff + 1
    n = np.arange(c)
    psi = np.zeros((c, c, c, c), dtype=complex)
    psi[n[:, None], n[:, None], n[None, :], n[None, :]] = (
        np.power(float(p.q1), n)[:, None] * np.power(float(p.q2), n)[None, :]
    )
    return PureState(psi.reshape(-1), p.cutoff, n_modes=4).normalized()


def herald_single_click(p: SourceParams) -> tuple[PureState, float]:
    """Project the idlers onto one click at the detected port and none at the other.

    The idler-combining splitter is arranged so the detected port carries
    ``t`` times the second idler plus ``r e^{i theta}`` times the first; at
    leading order the signal state is ``t q2 |0,1> + r e^{i theta} q1 |1,0>``.

    Returns the normalized two-mode signal state and the herald probability.
    """
    if not p.weak_pump:
        warnings.warn(
            f"pump amplitude above {WEAK_PUMP_LIMIT}: single-click projector is outside "
            "its weak-pump validity range", RuntimeWarning, stacklevel=2)
    psi = initial_state(p)
    r_eff = p.bs.r * np.exp(1j * p.theta)
    # creation_map row for i1 ends in -conj(r'), row for i2 in conj(t')
    combiner = BeamSplitterParams(p.bs.t.conjugate(), -r_eff.conjugate())
    mixed = apply_beamsplitter(psi, combiner, modes=(I1, I2))
    signal = mixed.tensor()[:, 0, :, 1]
    prob = float(np.sum(np.abs(signal) ** 2))
    if prob <= 1e-300:
        raise HeraldImpossibleError("herald projection has zero norm (no idler photons)")
    out = PureState(signal.reshape(-1) / np.sqrt(prob), p.cutoff, n_modes=2)
    return out, prob


def leading_order_state(p: SourceParams) -> PureState:
    """Lowest-order heralded state ``t q2 |0,1> + r e^{i theta} q1 |1,0>``."""
    coeffs = {(0, 1): p.bs.t * p.q2, (1, 0): p.bs.r * np.exp(1j * p.theta) * p.q1}
    return PureState.from_dict(coeffs, p.cutoff)


def mix_fake_counts(rho: DensityMatrix, f: FakeCountParams) -> DensityMatrix:
    """``(1 - L_fake) rho + L_fake |0,0><0,0|``."""
    mat = (1.0 - f.l_fake) * rho.elements
    mat[0, 0] += f.l_fake
    return DensityMatrix(mat, rho.cutoff)
