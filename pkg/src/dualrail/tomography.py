"""Two-mode homodyne tomography by iterative maximum likelihood (RρR).

Each recorded pair ``(x1, x2)`` in basis ``(phi1, phi2)`` is a rank-one POVM
element ``|u><u|`` with ``<n1,n2|u> = conj(<x1|R|n1> <x2|R|n2>)``; the update is
``rho <- R rho R / tr(...)`` with ``R = sum_k |u_k><u_k| / p_k`` (unbinned).
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .fock import DensityMatrix
from .homodyne import (HomodyneBasis, QuadratureBatch, default_bases, hermite_functions,
                       rotated_wavefunctions, stage_rng)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TomographyPlan:
    bases: tuple = field(default_factory=lambda: tuple(default_bases(7)))
    samples_per_basis: int = 3000
    cutoff: int = 3
    max_iterations: int = 2000
    convergence_tol: float = 1e-6
    debug: bool = False

    def __post_init__(self):
        if len(self.bases) == 0:
            raise ValueError("a tomography plan needs at least one basis")
        if self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        object.__setattr__(self, "bases", tuple(self.bases))


@dataclass
class Diagnostics:
    iterations: int
    converged: bool
    loglik: list[float]
    update_norm: float
    diluted: bool = False


def povm_vectors(batches: Sequence[QuadratureBatch], cutoff: int) -> np.ndarray:
    """Stack of ``u_k`` (one row per sample) for all batches, in batch order."""
    rows = []
    for batch in batches:
        x1, x2 = batch.samples[:, 0], batch.samples[:, 1]
        w1 = rotated_wavefunctions(x1, batch.basis.phi1, cutoff)
        w2 = rotated_wavefunctions(x2, batch.basis.phi2, cutoff)
        rows.append(np.einsum("as,bs->sab", w1, w2).reshape(len(batch), -1).conj())
    return np.vstack(rows)


def povm_element(x1: float, x2: float, basis: HomodyneBasis, cutoff: int) -> np.ndarray:
    """``|x1,phi1><x1,phi1| (x) |x2,phi2><x2,phi2|`` in the truncated Fock basis."""
    batch = QuadratureBatch(basis, np.array([[x1, x2]]))
    u = povm_vectors([batch], cutoff)[0]
    return np.outer(u, u.conj())


class _Design:
    """Per-basis factorization ``u_k = d_b * h_k`` with real ``h_k``.

    ``p_k = h_k^T Re(conj(d_b) rho d_b) h_k`` and
    ``R = sum_b diag(d_b) (sum_k h_k h_k^T / p_k) diag(conj(d_b))``, which keeps
    the per-sample work in real arithmetic.
    """

    def __init__(self, batches: Sequence[QuadratureBatch], cutoff: int):
        c = cutoff + 1
        n = np.arange(c)
        self.h, self.d, self.slices = [], [], []
        start = 0
        for batch in batches:
            psi1 = hermite_functions(batch.samples[:, 0], cutoff)
            psi2 = hermite_functions(batch.samples[:, 1], cutoff)
            self.h.append(np.einsum("as,bs->sab", psi1, psi2).reshape(len(batch), -1))
            ph = batch.basis.phi1 * n[:, None] + batch.basis.phi2 * n[None, :]
            self.d.append(np.exp(-1j * ph).reshape(-1))
            self.slices.append(slice(start, start + len(batch)))
            start += len(batch)
        self.n_total = start

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_total)
        for h, d, sl in zip(self.h, self.d, self.slices):
            rb = np.ascontiguousarray((d.conj()[:, None] * rho * d[None, :]).real)
            out[sl] = np.einsum("ka,ka->k", h @ rb, h)
        return out

    def r_operator(self, inv_p: np.ndarray) -> np.ndarray:
        """Per-basis blocks combined by a fixed pairwise tree."""
        parts = []
        for h, d, sl in zip(self.h, self.d, self.slices):
            block = (h.T * inv_p[sl]) @ h
            parts.append(d[:, None] * block * d.conj()[None, :])
        while len(parts) > 1:
            parts = [parts[i] + parts[i + 1] if i + 1 < len(parts) else parts[i]
                     for i in range(0, len(parts), 2)]
        return parts[0]


def _trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))


def _check_iterate(rho: np.ndarray) -> None:
    DensityMatrix(rho, int(round(np.sqrt(rho.shape[0]))) - 1)


def mle_reconstruct(data: Sequence[QuadratureBatch], plan: TomographyPlan,
                    initial: Optional[DensityMatrix] = None) -> tuple[DensityMatrix, Diagnostics]:
    """Maximum-likelihood density matrix from unbinned quadrature samples.

    Switches to the diluted update ``(1 + eps R)/(1 + eps)`` with ``eps = 0.5``
    if a plain step ever lowers the likelihood. Non-convergence is reported in
    the diagnostics rather than raised.
    """
    if not data:
        raise ValueError("no quadrature data")
    dim = (plan.cutoff + 1) ** 2
    n_total = sum(len(b) for b in data)
    if len({b.basis for b in data}) < 2:
        raise ValueError("at least two distinct homodyne bases are required")
    if n_total < 10 * dim ** 2:
        warnings.warn(f"{n_total} samples for a {dim}-dimensional space is thin for MLE",
                      RuntimeWarning, stacklevel=2)
    design = _Design(data, plan.cutoff)
    rho = (initial.embed(plan.cutoff).elements.copy() if initial is not None
           else np.eye(dim, dtype=complex) / dim)
    p = design.probabilities(rho)
    loglik = [float(np.sum(np.log(p)))]
    eps = None
    update = np.inf
    converged = False
    it = 0
    for it in range(1, plan.max_iterations + 1):
        r = design.r_operator(1.0 / p) / n_total
        step = r if eps is None else (np.eye(dim) + eps * r) / (1.0 + eps)
        new = step @ rho @ step
        new = 0.5 * (new + new.conj().T)
        new /= np.trace(new).real
        p_new = design.probabilities(new)
        ll = float(np.sum(np.log(p_new)))
        if ll < loglik[-1] - 1e-9 and eps is None:
            log.debug("likelihood decreased at iteration %d; diluting", it)
            eps = 0.5
            continue
        update = _trace_norm(new - rho)
        rho, p = new, p_new
        loglik.append(ll)
        if plan.debug:
            _check_iterate(rho)
        if update < plan.convergence_tol:
            converged = True
            break
    diag = Diagnostics(it, converged, loglik, update, eps is not None)
    return DensityMatrix.from_array(rho, plan.cutoff), diag


def resample_batches(data: Sequence[QuadratureBatch], rng: np.random.Generator) -> list[QuadratureBatch]:
    """Draw events with replacement within each basis."""
    out = []
    for batch in data:
        idx = rng.integers(0, len(batch), size=len(batch))
        out.append(QuadratureBatch(batch.basis, batch.samples[idx]))
    return out


@dataclass
class BootstrapResult:
    point: dict
    mean: dict
    std: dict
    values: dict


def bootstrap(data: Sequence[QuadratureBatch], plan: TomographyPlan, resamples: int, seed: int,
              metrics: Optional[Mapping[str, Callable[[DensityMatrix], float]]] = None,
              workers: int = 1, point_estimate: Optional[DensityMatrix] = None) -> BootstrapResult:
    """Standard errors of ``metrics`` by resampling events within each basis.

    Each resample is reconstructed starting from the point estimate. Resample
    ``i`` draws from the ``(seed, "bootstrap", i)`` substream, so results do not
    depend on ``workers``.
    """
    if resamples < 50:
        raise ValueError("bootstrap needs at least 50 resamples")
    if metrics is None:
        from .analysis import default_metrics
        metrics = default_metrics()
    if point_estimate is None:
        point_estimate, _ = mle_reconstruct(data, plan)

    def one(i):
        rho_i, _ = mle_reconstruct(resample_batches(data, stage_rng(seed, "bootstrap", i)),
                                   plan, initial=point_estimate)
        return {name: float(fn(rho_i)) for name, fn in metrics.items()}

    if workers <= 1:
        runs = [one(i) for i in range(resamples)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, range(resamples)))
    values = {name: np.array([r[name] for r in runs]) for name in metrics}
    return BootstrapResult(
        point={name: float(fn(point_estimate)) for name, fn in metrics.items()},
        mean={name: float(v.mean()) for name, v in values.items()},
        std={name: float(v.std(ddof=1)) for name, v in values.items()},
        values=values,
    )
