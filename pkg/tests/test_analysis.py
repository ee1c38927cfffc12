import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from dualrail.analysis import (
    DiagnosticsError,
    UnwrapAmbiguityError,
    analyze,
    estimate_amplitudes,
    estimate_dephasing,
    fit_exponential_decay,
    fit_phase_rotation,
    fit_phase_slope,
    log_negativity,
    log_negativity_subspace,
    state_phase,
    wigner,
    wigner_cross_section,
    wigner_origin,
    _single_mode_wigner,
)
from dualrail.channels import (
    DecayModel,
    DephasingParams,
    LossParams,
    ReleaseSchedule,
    dephasing_channel,
    detuning_rotation,
    efficiency_at,
    loss_channel,
)
from dualrail.fock import (
    DensityMatrix,
    PureState,
    bell_state,
    dual_rail_state,
    phase_rotation,
)
from dualrail.homodyne import marginal_pdf

from conftest import random_density, random_product

DW = 2 * math.pi * 300e3


def pure(coeffs, cutoff=1):
    return PureState.from_dict(coeffs, cutoff).to_density()


def _direct_pt_negativity(mat4):
    # independent 4x4 partial transpose written out by index
    pt = np.zeros((4, 4), complex)
    for k in range(2):
        for l in range(2):
            for m in range(2):
                for n in range(2):
                    pt[2 * k + n, 2 * m + l] = mat4[2 * k + l, 2 * m + n]
    return math.log2(np.sum(np.abs(np.linalg.eigvals(pt))))


def test_negativity_examples():
    assert log_negativity_subspace(bell_state()) == pytest.approx(1.0, abs=1e-12)
    assert log_negativity_subspace(pure({(0, 0): 1, (1, 1): 1})) == pytest.approx(1.0, abs=1e-12)
    lossy = loss_channel(bell_state(), LossParams(0.5, 0.5))
    closed = math.log2(1 + math.sqrt(0.5) - 0.5)
    assert closed == pytest.approx(0.2716, abs=5e-5)
    assert log_negativity_subspace(lossy) == pytest.approx(closed, abs=1e-12)
    assert _direct_pt_negativity(lossy.elements) == pytest.approx(closed, abs=1e-12)


def test_product_states_have_zero_negativity(rng):
    for _ in range(20):
        assert log_negativity_subspace(random_product(rng, 2)) == pytest.approx(0, abs=1e-9)


def test_separable_mixtures(rng):
    for _ in range(100):
        w = rng.dirichlet(np.ones(4))
        mat = sum(wi * random_product(rng, 1).elements for wi in w)
        assert log_negativity_subspace(DensityMatrix.from_array(mat, 1)) == pytest.approx(0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_negativity_symmetric_in_transposed_mode(seed):
    rho = random_density(np.random.default_rng(seed), 2, rank=2)
    assert log_negativity_subspace(rho, mode=1) == pytest.approx(log_negativity_subspace(rho, mode=2), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_subspace_filter_cannot_raise_average_negativity(seed):
    # projecting each mode onto {|0>, |1>} is one outcome of a local filter, so only
    # the probability-weighted negativity is bounded for arbitrary states
    rho = random_density(np.random.default_rng(seed), 2, rank=2)
    full = log_negativity(rho.elements, 2)
    sub = log_negativity_subspace(rho, raw=True)
    p = np.real(sum(rho.population(a, b) for a in (0, 1) for b in (0, 1)))
    # weighted negativity of the filtered branch is bounded by the full negativity
    assert p * (2 ** sub - 1) <= (2 ** full - 1) + 1e-9


@pytest.mark.parametrize("l_fake", [0.0, 0.05])
def test_subspace_negativity_bounds_full_for_generated_states(l_fake):
    from dualrail.source import FakeCountParams, SourceParams, herald_single_click, mix_fake_counts
    from dualrail.fock import BeamSplitterParams
    from dualrail.channels import store
    for R in (0.3, 0.5, 0.7):
        psi, _ = herald_single_click(SourceParams(0.15, 0.1, 0.3, BeamSplitterParams.from_reflectivity(R), 3))
        base = mix_fake_counts(psi.to_density(), FakeCountParams(l_fake))
        for l in np.linspace(0, 0.9, 5):
            for s in (0.0, 0.5, 1.0):
                rho = store(base, LossParams(l, 0.7 * l), DephasingParams(s), ReleaseSchedule(2e-7, 0, DW))
                assert log_negativity_subspace(rho) <= log_negativity(rho.elements, 3) + 1e-9


def test_negativity_monotone_under_noise():
    bell = bell_state()
    e_loss = [log_negativity_subspace(loss_channel(bell, LossParams(l, l))) for l in np.linspace(0, 0.95, 20)]
    e_deph = [log_negativity_subspace(dephasing_channel(bell, DephasingParams(s))) for s in np.linspace(0, 3, 20)]
    assert np.all(np.diff(e_loss) <= 1e-12)
    assert np.all(np.diff(e_deph) <= 1e-12)


def test_raw_and_clamped():
    rho = pure({(0, 0): 1})
    assert log_negativity_subspace(rho) >= 0
    assert log_negativity_subspace(rho, raw=True) == pytest.approx(0, abs=1e-12)


def test_single_mode_wigner_against_integral():
    # W_mn(x, p) = 1/pi int <x+y|m><n|x-y> e^{-2ipy} dy
    from dualrail.homodyne import hermite_functions
    y = np.linspace(-8, 8, 4001)
    for (x0, p0) in [(0.3, -0.5), (1.1, 0.7)]:
        w = _single_mode_wigner(3, np.array(x0), np.array(p0))
        hp = hermite_functions(x0 + y, 3)
        hm = hermite_functions(x0 - y, 3)
        for m in range(4):
            for n in range(4):
                integrand = hp[m] * hm[n] * np.exp(-2j * p0 * y)
                ref = trapezoid(integrand, y) / math.pi
                assert w[m, n] == pytest.approx(ref, abs=1e-10)


def test_wigner_origin_examples():
    assert wigner_origin(DensityMatrix.vacuum(2)) == pytest.approx(1 / math.pi ** 2)
    assert wigner_origin(pure({(1, 0): 1})) == pytest.approx(-1 / math.pi ** 2)
    assert wigner_origin(bell_state()) == pytest.approx(-1 / math.pi ** 2)
    w = wigner(bell_state(), [0.0], [0.0], [0.0], [0.0])
    assert w[0, 0, 0, 0] == pytest.approx(-1 / math.pi ** 2)


def test_wigner_normalized():
    x = np.linspace(-5, 5, 41)
    w = wigner(random_density(np.random.default_rng(1), 1), x, x, x, x)
    total = w.sum() * (x[1] - x[0]) ** 4
    assert total == pytest.approx(1, abs=1e-6)


def test_wigner_marginal_matches_quadrature_pdf():
    rho = random_density(np.random.default_rng(2), 2)
    x = np.linspace(-5, 5, 51)
    w = wigner(rho, x, x, x, x)
    marg = w.sum(axis=(1, 2, 3)) * (x[1] - x[0]) ** 3
    assert np.allclose(marg, marginal_pdf(rho.reduced(1), 0.0, x), atol=1e-3)


def test_cross_section_is_diagonal_slice():
    rho = random_density(np.random.default_rng(3), 1)
    x = np.linspace(-2, 2, 9)
    full = wigner(rho, x, x, x, x)
    cs = wigner_cross_section(rho, x, x)
    for i in range(9):
        for j in range(9):
            assert cs[i, j] == pytest.approx(full[i, j, i, j], abs=1e-14)


def test_wigner_sign_flip_under_loss():
    one = pure({(1, 0): 1})
    for l in np.linspace(0, 1, 11):
        w0 = wigner_origin(loss_channel(one, LossParams(l, 0)))
        assert w0 == pytest.approx((2 * l - 1) / math.pi ** 2, abs=1e-12)


def test_amplitudes_examples():
    assert estimate_amplitudes(bell_state(), LossParams()) == pytest.approx((math.sqrt(0.5), math.sqrt(0.5)))
    # populations that imply 0.71 and 0.64 once each rail's loss is undone
    l1, l2 = 0.45, 0.35
    mat = np.diag([0.0, 0.71 ** 2 * (1 - l2), 0.64 ** 2 * (1 - l1), 0.0]).astype(complex)
    mat[0, 0] = 1 - mat.trace()
    rho = DensityMatrix(mat, 1)
    assert estimate_amplitudes(rho, LossParams(l1, l2), normalize=False) == pytest.approx((0.71, 0.64))


def test_amplitudes_invert_loss():
    rho = dual_rail_state(0.8, 0.6, 0.3).to_density()
    lossy = loss_channel(rho, LossParams(0.3, 0.6))
    a, b = estimate_amplitudes(lossy, LossParams(0.3, 0.6))
    assert (a, b) == pytest.approx((0.8, 0.6))


def test_amplitudes_33_67_ratio():
    rho = dual_rail_state(1.0, math.sqrt(2.5), math.pi).to_density()
    a, b = estimate_amplitudes(rho, LossParams())
    assert (a / b) ** 2 == pytest.approx(0.4)


def test_amplitudes_degenerate():
    with pytest.raises(Exception):
        estimate_amplitudes(DensityMatrix.vacuum(1), LossParams())


def test_dephasing_estimator():
    assert estimate_dephasing(bell_state()) == pytest.approx(0, abs=1e-7)
    mat = bell_state().elements.copy()
    mat[1, 2] *= 0.9
    mat[2, 1] *= 0.9
    assert math.degrees(estimate_dephasing(DensityMatrix(mat, 1))) == pytest.approx(26.3, abs=0.05)
    mat[1, 2] = mat[2, 1] = 0
    assert estimate_dephasing(DensityMatrix(mat, 1)) == math.inf
    bad = np.diag([0, 0.5, 0.5, 0]).astype(complex)
    bad[1, 2] = bad[2, 1] = 0.5 * (1 + 1e-3)
    with pytest.raises(DiagnosticsError):
        estimate_dephasing(DensityMatrix(bad, 1, check=False))
    with pytest.raises(DiagnosticsError):
        estimate_dephasing(pure({(0, 1): 1}))


@settings(max_examples=40, deadline=None)
@given(sigma=st.floats(0, 1), l1=st.floats(0, 0.9), l2=st.floats(0, 0.9))
def test_dephasing_round_trip(sigma, l1, l2):
    rho = loss_channel(bell_state(), LossParams(l1, l2))
    out = dephasing_channel(rho, DephasingParams(sigma))
    assert estimate_dephasing(out) == pytest.approx(sigma, abs=1e-7)


def test_dephasing_round_trip_precise():
    for sigma in (0.1, 0.5, 1.0):
        out = dephasing_channel(bell_state(), DephasingParams(sigma))
        assert estimate_dephasing(out) == pytest.approx(sigma, abs=1e-9)


def test_phase_rotation_fit():
    bell = bell_state()
    series = [(d, detuning_rotation(bell, ReleaseSchedule(d, 0, DW))) for d in np.arange(5) * 100e-9]
    assert fit_phase_rotation(series) == pytest.approx(300e3, abs=1)
    flat = [(d, bell) for d in np.arange(5) * 100e-9]
    assert fit_phase_rotation(flat) == pytest.approx(0, abs=1e-6)
    with pytest.raises(ValueError):
        fit_phase_rotation(series[:2])


@pytest.mark.parametrize("freq", [390e3, -358e3])
def test_phase_slope_regression(freq):
    delays = np.arange(5) * 100e-9
    phases = np.angle(np.exp(1j * (2 * math.pi * freq * delays + 0.2)))
    assert fit_phase_slope(delays, phases) == pytest.approx(freq, rel=1e-9)


def test_unwrap_ambiguity():
    delays = np.arange(5) * 100e-9
    with pytest.raises(UnwrapAmbiguityError):
        fit_phase_slope(delays, 2 * math.pi * 4e6 * delays)


def test_phase_wraps_across_pi():
    delays = np.arange(8) * 100e-9
    phases = np.angle(np.exp(1j * (3.0 + 2 * math.pi * 1e6 * delays)))
    assert fit_phase_slope(delays, phases) == pytest.approx(1e6, rel=1e-9)


def test_exponential_fit_exact():
    d = DecayModel(0.8, 1.42e-6)
    pts = [(t, efficiency_at(d, t)) for t in np.linspace(0, 400e-9, 5)]
    fit = fit_exponential_decay(pts)
    assert fit.eta0 == pytest.approx(0.8, abs=1e-9)
    assert fit.tau == pytest.approx(1.42e-6, rel=1e-9)
    two = fit_exponential_decay(pts[::4])
    assert two.tau == pytest.approx(1.42e-6, rel=1e-12)


def test_exponential_fit_noisy():
    rng = np.random.default_rng(8)
    t = np.linspace(0, 400e-9, 5)
    d = DecayModel(0.8, 1.42e-6)
    taus = []
    for _ in range(100):
        f = [efficiency_at(d, ti) * (1 + 0.05 * rng.normal()) for ti in t]
        try:
            taus.append(fit_exponential_decay(list(zip(t, f))).tau)
        except ValueError:
            taus.append(np.inf)
    err = np.median(np.abs(np.array(taus) - 1.42e-6) / 1.42e-6)
    assert err < 0.15


def test_exponential_fit_errors():
    with pytest.raises(ValueError):
        fit_exponential_decay([(0, 0.5), (1e-7, 0.0)])
    with pytest.raises(ValueError):
        fit_exponential_decay([(0, 0.5)])


def test_analyze_report():
    rep = analyze(bell_state(), LossParams())
    keys = dict(rep.items())
    assert keys["log_negativity"] == pytest.approx(1.0)
    assert keys["alpha"] == pytest.approx(math.sqrt(0.5))
    assert state_phase(phase_rotation(bell_state(), 0.4, 0)) == pytest.approx(0.4)
