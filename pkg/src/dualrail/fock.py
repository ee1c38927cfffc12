"""Truncated Fock-space linear algebra for two bosonic modes.

Basis ordering is row-major in the photon numbers: for two modes with cutoff
``n_max`` the index of ``|n1, n2>`` is ``n1 * (n_max + 1) + n2``, so mode 1 is
the slow index. Pure states may carry more than two modes (the source model
needs four); density matrices are always two-mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = -1e-9
BS_TOL = 1e-12


class InvalidStateError(ValueError):
    """A state fails the Hermiticity or positivity checks."""


class DegenerateInputError(ValueError):
    """An operation produced a zero-weight result (e.g. empty projection)."""


def _check_cutoff(n_max: int) -> int:
    if int(n_max) != n_max or n_max < 1:
        raise ValueError(f"cutoff must be an integer >= 1, got {n_max!r}")
    return int(n_max)


def index(n1: int, n2: int, n_max: int) -> int:
    """Flat index of ``|n1, n2>`` at cutoff ``n_max``."""
    return n1 * (n_max + 1) + n2


def basis_labels(n_max: int) -> list[tuple[int, int]]:
    return [(n1, n2) for n1 in range(n_max + 1) for n2 in range(n_max + 1)]


@dataclass(frozen=True)
class PureState:
    """State vector over ``n_modes`` modes, each truncated at ``cutoff`` photons."""

    amplitudes: np.ndarray
    cutoff: int
    n_modes: int = 2

    def __post_init__(self):
        _check_cutoff(self.cutoff)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != (self.cutoff + 1) ** self.n_modes:
            raise ValueError(
                f"expected {(self.cutoff + 1) ** self.n_modes} amplitudes, got {amps.size}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_dict(cls, coeffs: dict, cutoff: int, normalize: bool = True) -> "PureState":
        """Build from ``{(n1, n2, ...): amplitude}``."""
        n_modes = len(next(iter(coeffs)))
        vec = np.zeros((cutoff + 1,) * n_modes, dtype=complex)
        for occ, amp in coeffs.items():
            vec[tuple(occ)] += amp
        state = cls(vec.reshape(-1), cutoff, n_modes)
        return state.normalized() if normalize else state

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        nrm = self.norm
        if nrm == 0.0:
            raise DegenerateInputError("cannot normalize a zero vector")
        return PureState(self.amplitudes / nrm, self.cutoff, self.n_modes)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per mode."""
        return self.amplitudes.reshape((self.cutoff + 1,) * self.n_modes)

    def amplitude(self, *occupation: int) -> complex:
        return complex(self.tensor()[occupation])

    def to_density(self) -> "DensityMatrix":
        if self.n_modes != 2:
            raise ValueError("density matrices are two-mode only")
        psi = self.normalized().amplitudes
        return DensityMatrix(np.outer(psi, psi.conj()), self.cutoff)


@dataclass(frozen=True)
class DensityMatrix:
    """Two-mode mixed state on the truncated Fock basis.

    Construction checks that the matrix is a unit-trace positive operator at
    the module tolerances unless ``check=False`` (used for intermediate arithmetic).
    """

    elements: np.ndarray
    cutoff: int
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        _check_cutoff(self.cutoff)
        mat = np.array(self.elements, dtype=complex)
        d = (self.cutoff + 1) ** 2
        if mat.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got shape {mat.shape}")
        if self.check:
            validate_density(mat)
        mat.setflags(write=False)
        object.__setattr__(self, "elements", mat)

    @classmethod
    def vacuum(cls, cutoff: int) -> "DensityMatrix":
        mat = np.zeros(((cutoff + 1) ** 2,) * 2, dtype=complex)
        mat[0, 0] = 1.0
        return cls(mat, cutoff)

    @classmethod
    def from_array(cls, mat: np.ndarray, cutoff: int) -> "DensityMatrix":
        """Hermitize and renormalize a nearly valid matrix before wrapping it."""
        mat = 0.5 * (mat + mat.conj().T)
        return cls(mat / np.trace(mat).real, cutoff)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def tensor(self) -> np.ndarray:
        """Elements as ``rho[n1, n2, m1, m2]`` for ``|n1,n2><m1,m2|``."""
        c = self.cutoff + 1
        return self.elements.reshape(c, c, c, c)

    def element(self, ket: tuple[int, int], bra: tuple[int, int]) -> complex:
        return complex(self.tensor()[ket[0], ket[1], bra[0], bra[1]])

    def population(self, n1: int, n2: int) -> float:
        return self.element((n1, n2), (n1, n2)).real

    def reduced(self, mode: int) -> np.ndarray:
        """Single-mode reduced density matrix of ``mode`` (1 or 2)."""
        t = self.tensor()
        if mode == 1:
            return np.einsum("ajbj->ab", t)
        if mode == 2:
            return np.einsum("jajb->ab", t)
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")

    def photon_number(self) -> float:
        """Expectation of the total photon number."""
        n = np.array([n1 + n2 for n1, n2 in basis_labels(self.cutoff)], dtype=float)
        return float(np.real(np.diag(self.elements)) @ n)

    def truncate(self, cutoff: int) -> "DensityMatrix":
        """Restrict to a smaller cutoff and renormalize."""
        c = cutoff + 1
        sub = self.tensor()[:c, :c, :c, :c].reshape(c * c, c * c)
        tr = np.trace(sub).real
        if tr <= 0:
            raise DegenerateInputError("no weight below the requested cutoff")
        return DensityMatrix(sub / tr, cutoff)

    def embed(self, cutoff: int) -> "DensityMatrix":
        """Zero-pad to a larger cutoff."""
        if cutoff < self.cutoff:
            return self.truncate(cutoff)
        c0, c = self.cutoff + 1, cutoff + 1
        big = np.zeros((c, c, c, c), dtype=complex)
        big[:c0, :c0, :c0, :c0] = self.tensor()
        return DensityMatrix(big.reshape(c * c, c * c), cutoff)


State = Union[PureState, DensityMatrix]


def validate_density(mat: np.ndarray) -> None:
    herm = np.max(np.abs(mat - mat.conj().T)) if mat.size else 0.0
    if herm > HERMITIAN_TOL:
        raise InvalidStateError(f"matrix not Hermitian (max deviation {herm:.3g})")
    tr = np.trace(mat)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"trace {tr.real:.12g} differs from 1")
    lam = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))[0]
    if lam < PSD_TOL:
        raise InvalidStateError(f"matrix not positive semidefinite (min eigenvalue {lam:.3g})")


@dataclass(frozen=True)
class BeamSplitterParams:
    """Complex transmission ``t`` and reflection ``r`` with ``|t|^2 + |r|^2 = 1``.

    Convention (Heisenberg picture, determinant one)::

        a -> t a + r b,    b -> -conj(r) a + conj(t) b

    so that in the Schroedinger picture ``a^dag -> t a^dag - conj(r) b^dag`` and
    ``b^dag -> r a^dag + conj(t) b^dag``.
    """

    t: complex
    r: complex

    def __post_init__(self):
        t, r = complex(self.t), complex(self.r)
        if abs(abs(t) ** 2 + abs(r) ** 2 - 1.0) > BS_TOL:
            raise ValueError(f"|t|^2 + |r|^2 = {abs(t) ** 2 + abs(r) ** 2!r}, expected 1")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)

    @classmethod
    def from_reflectivity(cls, reflectivity: float, phase: float = 0.0) -> "BeamSplitterParams":
        if not 0.0 <= reflectivity <= 1.0:
            raise ValueError("reflectivity must lie in [0, 1]")
        return cls(math.sqrt(1.0 - reflectivity), math.sqrt(reflectivity) * np.exp(1j * phase))

    def inverse(self) -> "BeamSplitterParams":
        return BeamSplitterParams(self.t.conjugate(), -self.r)

    def creation_map(self) -> np.ndarray:
        """Row ``j`` holds the image of ``a_j^dag`` in terms of ``(a^dag, b^dag)``."""
        t, r = self.t, self.r
        return np.array([[t, -r.conjugate()], [r, t.conjugate()]])


def annihilation_matrix(cutoff: int, mode: int) -> np.ndarray:
    """Lowering operator of ``mode`` (1 or 2) on the two-mode truncated space."""
    cutoff = _check_cutoff(cutoff)
    if mode not in (1, 2):
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")
    a = single_mode_annihilation(cutoff)
    eye = np.eye(cutoff + 1)
    return np.kron(a, eye) if mode == 1 else np.kron(eye, a)


def single_mode_annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), k=1).astype(complex)


def number_operator(cutoff: int, mode: int) -> np.ndarray:
    a = annihilation_matrix(cutoff, mode)
    return a.conj().T @ a


def mode_transform(creation_map: np.ndarray, cutoff: int) -> np.ndarray:
    """Fock-space matrix of the passive two-mode map given by ``creation_map``.

    Each input ``|na, nb>`` is expanded as
    ``(M00 a^dag + M01 b^dag)^na (M10 a^dag + M11 b^dag)^nb |0> / sqrt(na! nb!)``;
    output components beyond the cutoff are dropped, which is exact for inputs
    with total photon number <= cutoff.
    """
    c = cutoff + 1
    (m00, m01), (m10, m11) = np.asarray(creation_map, dtype=complex)
    out = np.zeros((c * c, c * c), dtype=complex)
    fact = [math.factorial(k) for k in range(2 * c)]
    for na in range(c):
        for nb in range(c):
            col = index(na, nb, cutoff)
            for j in range(na + 1):
                cj = math.comb(na, j) * m00 ** j * m01 ** (na - j)
                for k in range(nb + 1):
                    ck = math.comb(nb, k) * m10 ** k * m11 ** (nb - k)
                    pa, pb = j + k, na + nb - j - k
                    if pa > cutoff or pb > cutoff:
                        continue
                    amp = cj * ck * math.sqrt(fact[pa] * fact[pb] / (fact[na] * fact[nb]))
                    out[index(pa, pb, cutoff), col] += amp
    return out


def _apply_two_mode_op(state: State, op: np.ndarray, modes: Sequence[int]) -> State:
    if isinstance(state, DensityMatrix):
        if tuple(modes) == (1, 2):
            u = op
        elif tuple(modes) == (2, 1):
            c = state.cutoff + 1
            swap = np.eye(c * c)[[index(n2, n1, state.cutoff) for n1 in range(c) for n2 in range(c)]]
            u = swap @ op @ swap
        else:
            raise ValueError(f"invalid mode pair {modes!r} for a two-mode state")
        return DensityMatrix.from_array(u @ state.elements @ u.conj().T, state.cutoff)
    a, b = modes
    if a == b or not (1 <= a <= state.n_modes and 1 <= b <= state.n_modes):
        raise ValueError(f"invalid mode pair {modes!r} for {state.n_modes} modes")
    c = state.cutoff + 1
    psi = np.moveaxis(state.tensor(), (a - 1, b - 1), (0, 1))
    shape = psi.shape
    psi = (op @ psi.reshape(c * c, -1)).reshape(shape)
    psi = np.moveaxis(psi, (0, 1), (a - 1, b - 1))
    return PureState(psi.reshape(-1), state.cutoff, state.n_modes)


def apply_beamsplitter(state: State, bs: BeamSplitterParams, modes: Sequence[int] = (1, 2)) -> State:
    """Apply the beamsplitter unitary to the ordered pair ``modes`` (1-based)."""
    op = mode_transform(bs.creation_map(), state.cutoff)
    return _apply_two_mode_op(state, op, modes)


def phase_rotation(state: State, phi1: float, phi2: float) -> State:
    """Multiply the amplitude of ``|n1, n2>`` by ``exp(i (phi1 n1 + phi2 n2))``."""
    c = state.cutoff + 1
    n = np.arange(c)
    phase = np.exp(1j * (phi1 * n[:, None] + phi2 * n[None, :])).reshape(-1)
    if isinstance(state, DensityMatrix):
        return DensityMatrix(phase[:, None] * state.elements * phase.conj()[None, :], state.cutoff)
    if state.n_modes != 2:
        raise ValueError("phase_rotation acts on two-mode states")
    return PureState(phase * state.amplitudes, state.cutoff, 2)


def _as_matrix(state: State) -> np.ndarray:
    if isinstance(state, PureState):
        psi = state.normalized().amplitudes
        return np.outer(psi, psi.conj())
    return np.asarray(state.elements)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    lam = np.clip(lam, 0.0, None)
    return (vec * np.sqrt(lam)) @ vec.conj().T


def fidelity(a: State, b: State) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(a) b sqrt(a)))^2``; ``|<a|b>|^2`` for pure states."""
    if isinstance(a, PureState) and isinstance(b, PureState):
        return float(abs(np.vdot(a.normalized().amplitudes, b.normalized().amplitudes)) ** 2)
    if isinstance(a, PureState) or isinstance(b, PureState):
        pure, other = (a, b) if isinstance(a, PureState) else (b, a)
        psi = pure.normalized().amplitudes
        return float(np.real(psi.conj() @ _as_matrix(other) @ psi))
    sa = _psd_sqrt(_as_matrix(a))
    inner = sa @ _as_matrix(b) @ sa
    lam = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return float(np.sum(np.sqrt(lam)) ** 2)


def trace_distance(a: State, b: State) -> float:
    diff = _as_matrix(a) - _as_matrix(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def partial_transpose(rho: Union[DensityMatrix, np.ndarray], mode: int = 2, cutoff: int = None) -> np.ndarray:
    """Partial transpose on ``mode``; the result is Hermitian but may be indefinite."""
    if isinstance(rho, DensityMatrix):
        mat, cutoff = rho.elements, rho.cutoff
    else:
        mat = np.asarray(rho)
        if cutoff is None:
            cutoff = int(round(math.sqrt(mat.shape[0]))) - 1
    c = cutoff + 1
    t = mat.reshape(c, c, c, c)
    if mode == 2:
        t = t.transpose(0, 3, 2, 1)
    elif mode == 1:
        t = t.transpose(2, 1, 0, 3)
    else:
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")
    return t.reshape(c * c, c * c)


def subspace_renormalize(rho: DensityMatrix, basis: Iterable[tuple[int, int]]) -> DensityMatrix:
    """Project onto the listed Fock states and rescale to unit trace."""
    idx = sorted({index(n1, n2, rho.cutoff) for n1, n2 in basis
                  if n1 <= rho.cutoff and n2 <= rho.cutoff})
    if not idx:
        raise DegenerateInputError("basis set has no states within the cutoff")
    proj = np.zeros_like(rho.elements)
    proj[np.ix_(idx, idx)] = rho.elements[np.ix_(idx, idx)]
    tr = np.trace(proj).real
    if tr <= 0.0:
        raise DegenerateInputError("zero weight in the requested subspace")
    return DensityMatrix(proj / tr, rho.cutoff)


DUAL_RAIL_SUBSPACE = ((0, 0), (0, 1), (1, 0), (1, 1))


def dual_rail_state(alpha: complex, beta: complex, theta: float, cutoff: int = 1) -> PureState:
    """``alpha |0,1> + beta e^{i theta} |1,0>``, normalized."""
    return PureState.from_dict({(0, 1): alpha, (1, 0): beta * np.exp(1j * theta)}, cutoff)


def bell_state(cutoff: int = 1) -> DensityMatrix:
    """``(|0,1> + |1,0>)/sqrt(2)`` as a density matrix."""
    return dual_rail_state(1.0, 1.0, 0.0, cutoff).to_density()
