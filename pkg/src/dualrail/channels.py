"""Storage degradation channels acting on two-mode states.

Per storage leg loss acts first and the two phase channels follow. The
channels commute on the dual-rail subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import DensityMatrix, phase_rotation


@dataclass(frozen=True)
class LossParams:
    """Fractional photon loss of mode 1 (``l1``) and mode 2 (``l2``)."""

    l1: float = 0.0
    l2: float = 0.0

    def __post_init__(self):
        for name in ("l1", "l2"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val!r}")


@dataclass(frozen=True)
class DecayModel:
    """Exponential memory efficiency ``eta0 * exp(-t / tau)``."""

    eta0: float
    tau: float

    def __post_init__(self):
        if not 0.0 < self.eta0 <= 1.0:
            raise ValueError(f"eta0 must lie in (0, 1], got {self.eta0!r}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau!r}")


@dataclass(frozen=True)
class DephasingParams:
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma!r}")


@dataclass(frozen=True)
class ReleaseSchedule:
    """Release times of both memories (seconds) and the signal/LO detuning (rad/s)."""

    t1: float = 0.0
    t2: float = 0.0
    delta_omega: float = 0.0

    def __post_init__(self):
        if self.t1 < 0.0 or self.t2 < 0.0:
            raise ValueError("release times must be non-negative")

    @property
    def delay(self) -> float:
        """``t1 - t2``."""
        return self.t1 - self.t2

    @property
    def relative_phase_shift(self) -> float:
        """Phase gained by ``|1,0>`` relative to ``|0,1>``."""
        return self.delta_omega * self.delay


def loss_kraus(loss: float, cutoff: int) -> list[np.ndarray]:
    """Single-mode pure-loss Kraus operators ``A_k`` (k photons lost)."""
    eta = 1.0 - loss
    c = cutoff + 1
    ops = []
    for k in range(c):
        a = np.zeros((c, c))
        for n in range(k, c):
            a[n - k, n] = math.sqrt(math.comb(n, k) * eta ** (n - k) * loss ** k)
        ops.append(a)
    return ops


def loss_channel(rho: DensityMatrix, p: LossParams) -> DensityMatrix:
    """Independent pure loss ``l1`` on mode 1 and ``l2`` on mode 2."""
    c = rho.cutoff + 1
    t = rho.tensor()
    # rho[n1, n2, m1, m2] -> sum_k A n1 m1 A^T on each mode in turn
    for axes, loss in (((0, 2), p.l1), ((1, 3), p.l2)):
        if loss == 0.0:
            continue
        out = np.zeros_like(t)
        for a in loss_kraus(loss, rho.cutoff):
            if axes == (0, 2):
                out += np.einsum("ia,abcd,jc->ibjd", a, t, a)
            else:
                out += np.einsum("ib,abcd,jd->aicj", a, t, a)
        t = out
    mat = t.reshape(c * c, c * c)
    return DensityMatrix(0.5 * (mat + mat.conj().T), rho.cutoff)


def dephasing_channel(rho: DensityMatrix, p: DephasingParams) -> DensityMatrix:
    """Average over a Gaussian relative phase ``theta ~ N(0, sigma^2)``.

    The phase enters as ``exp(i theta (n1 - n2) / 2)``, so the element
    ``|k,l><m,n|`` is damped by ``exp(-sigma^2 D^2 / 8)`` with
    ``D = (k - l) - (m - n)``; the dual-rail coherence gets ``exp(-sigma^2 / 2)``.
    """
    c = rho.cutoff + 1
    n = np.arange(c)
    imbalance = (n[:, None] - n[None, :]).reshape(-1)
    delta = imbalance[:, None] - imbalance[None, :]
    damp = np.exp(-(p.sigma ** 2) * delta ** 2 / 8.0)
    return DensityMatrix(rho.elements * damp, rho.cutoff)


def detuning_rotation(rho: DensityMatrix, s: ReleaseSchedule) -> DensityMatrix:
    """Free evolution under the detuning until each mode is released."""
    return phase_rotation(rho, s.delta_omega * s.t1, s.delta_omega * s.t2)


def efficiency_at(d: DecayModel, t: float) -> float:
    if t < 0.0:
        raise ValueError("storage time must be non-negative")
    return d.eta0 * math.exp(-t / d.tau)


def losses_at(d1: DecayModel, d2: DecayModel, t1: float, t2: float) -> LossParams:
    """Per-mode loss after storing mode 1 for ``t1`` and mode 2 for ``t2``."""
    return LossParams(1.0 - efficiency_at(d1, t1), 1.0 - efficiency_at(d2, t2))


def store(rho: DensityMatrix, losses: LossParams, dephasing: DephasingParams,
          schedule: ReleaseSchedule) -> DensityMatrix:
    """Loss first, then the two phase channels."""
    out = loss_channel(rho, losses)
    out = dephasing_channel(out, dephasing)
    return detuning_rotation(out, schedule)
