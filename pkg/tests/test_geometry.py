import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entangled_interferometer.errors import AmbiguityError, ConvergenceError, DomainError, SearchBoundError
from entangled_interferometer.geometry import (
    CROSS_LAYOUT,
    N_CROSS,
    Constellation,
    NullCondition,
    NullConditionSet,
    SolverOptions,
    condition_labels,
    forward_residuals,
    inject_gw,
    jacobian_rank,
    null_condition_jacobian,
    resolve_integers,
    self_fringe,
    solve_geometry,
    synthesize,
    wrap_quarter,
)
from entangled_interferometer.optics import OpticalTriplet, WaveVectorPair, pump_locked_wavevectors

TRIPLET = OpticalTriplet(0.53e-6, 1.016e-6, 1.107e-6)
WV = pump_locked_wavevectors(TRIPLET)
LP = TRIPLET.lambda_pump
REFERENCE_LENGTHS = (4e7, 4e7 + 0.37, 4e7 - 0.21)
ONE_PER_PAIR = [0, 2, 4]
SELF_ROWS = [6, 7, 8]
PUMP_ROW = 9


def mp_residuals(c, wv, ncs, delta_offset=0.0):
    """Unwrapped residuals evaluated entirely in 50-digit arithmetic."""
    out = []
    with mpmath.workdps(50):
        k, d = mpmath.mpf(wv.k), mpmath.mpf(wv.delta) + mpmath.mpf(delta_offset)
        ls = [mpmath.mpf(a) + mpmath.mpf(o) for a, o in zip(c.arm_lengths, c.length_offsets)]
        inst = list(c.instrument_phases_cross) + list(c.instrument_phases_self)
        ints = list(c.integers_cross) + list(c.integers_self)
        for row, cond in enumerate(ncs.conditions[:-1]):
            if cond.kind == "cross":
                i, j = cond.arms
                si, sj = cond.signs
                phi = (k + si * d / 2) * ls[i - 1] - (k + sj * d / 2) * ls[j - 1]
            else:
                phi = d * ls[cond.arms[0] - 1]
            out.append(float(phi - inst[row] - ints[row] * mpmath.pi / 2 - cond.measured))
    return np.array(out)


def wrapped_close(a, b, tol):
    return np.all(np.abs(wrap_quarter(np.asarray(a) - np.asarray(b))) <= tol)


def instance(seed, noise=0.0, lengths=None, guess_spread=3e-7):
    rng = np.random.default_rng(seed)
    if lengths is None:
        lengths = 4e7 + rng.uniform(-10, 10, 3)
    truth, ncs = synthesize(lengths, WV, LP, rng, noise)
    offsets = tuple(o + d for o, d in zip(truth.length_offsets, rng.uniform(-guess_spread, guess_spread, 3)))
    return truth, ncs, replace(truth, length_offsets=offsets)


def test_layout_and_labels():
    assert len(CROSS_LAYOUT) == N_CROSS == 6
    assert condition_labels()[:2] == ["cross12+-", "cross12-+"]
    assert condition_labels()[-4:] == ["self1", "self2", "self3", "pump"]


def test_constellation_invariants():
    with pytest.raises(DomainError):
        Constellation((4e7, 4e7, 1e5))
    with pytest.raises(DomainError):
        Constellation((4e7, 4e7, 4e7), instrument_phases_cross=(0.0,) * 3)
    c = Constellation((4e7, 4e7, 4e7), instrument_phases_self=(-1.0, 7.0, 2 * math.pi))
    assert all(0 <= p < 2 * math.pi for p in c.instrument_phases_self)
    wide = Constellation((1e3, 1e3, 1e3), length_band=(1.0, 1e4))
    assert wide.arm_lengths == (1e3, 1e3, 1e3)


def test_null_condition_set_invariants():
    _, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    assert len(ncs.conditions) == 10
    with pytest.raises(DomainError):
        NullConditionSet(ncs.conditions[:-1], LP)
    bad = list(ncs.conditions)
    bad[0] = NullCondition("cross", (1, 2), (1, 1))
    with pytest.raises(DomainError):
        NullConditionSet(tuple(bad), LP)
    dup = list(ncs.conditions)
    dup[1] = dup[0]
    with pytest.raises(DomainError):
        NullConditionSet(tuple(dup), LP)
    # order of entries does not matter
    shuffled = NullConditionSet(tuple(reversed(ncs.conditions)), LP)
    assert shuffled.conditions == ncs.conditions


def test_consistent_instance_has_zero_residuals():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    assert np.max(np.abs(forward_residuals(truth, WV, ncs))) <= 1e-9
    assert np.max(np.abs(forward_residuals(truth, WV, ncs, wrapped=False))) <= 1e-9
    assert np.max(np.abs(mp_residuals(truth, WV, ncs))) <= 1e-9


def test_perturbation_response():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    x = 1e-7
    assert WV.delta * x < math.pi / 4
    moved = replace(truth, length_offsets=(x, 0.0, 0.0))
    r = forward_residuals(moved, WV, ncs)
    kp, km = WV.k + WV.delta / 2, WV.k - WV.delta / 2
    assert r[6] == pytest.approx(WV.delta * x, rel=1e-7)
    expected = {0: kp * x, 1: km * x, 4: -km * x, 5: -kp * x}
    for row, value in expected.items():
        assert wrapped_close(r[row], value, 1e-7)
    assert np.all(np.abs(r[[2, 3, 7, 8]]) < 1e-9)
    assert wrapped_close(r[:-1], mp_residuals(moved, WV, ncs), 1e-9)


def test_degenerate_delta_self_residuals():
    wv0 = WaveVectorPair(math.pi / (2 * 0.53e-6) * 2, 0.0)
    c = Constellation(REFERENCE_LENGTHS, instrument_phases_self=(0.1, 0.2, 0.3))
    _, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    for lengths in (REFERENCE_LENGTHS, (5e7, 6e7, 7e7)):
        r = forward_residuals(replace(c, arm_lengths=lengths), wv0, ncs)
        assert np.allclose(r[6:9], wrap_quarter(-np.array([0.1, 0.2, 0.3])), atol=1e-12)


def test_gauge_shift():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    c0 = 2e-7
    shifted = replace(truth, length_offsets=(c0, c0, c0))
    r = forward_residuals(shifted, WV, ncs)
    d = WV.delta * c0
    # (+,-) rows and self rows shift by +delta c; (-,+) rows by -delta c
    assert np.allclose(r[[0, 2, 4]], d, rtol=1e-7)
    assert np.allclose(r[[1, 3, 5]], -d, rtol=1e-7)
    assert np.allclose(r[6:9], d, rtol=1e-7)


def test_jacobian_numeric_matches_analytic():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    Ja = null_condition_jacobian(truth, WV, ncs)
    Jn = null_condition_jacobian(truth, WV, ncs, method="numeric")
    assert np.allclose(Jn, Ja, rtol=1e-7, atol=1e-6)
    with pytest.raises(DomainError):
        null_condition_jacobian(truth, WV, ncs, method="complex-step")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rank_property(seed):
    truth, ncs, _ = instance(seed)
    J = null_condition_jacobian(truth, WV, ncs)
    assert jacobian_rank(J[ONE_PER_PAIR + [PUMP_ROW]]) == 3
    for s in SELF_ROWS:
        assert jacobian_rank(J[ONE_PER_PAIR + [s, PUMP_ROW]]) == 4


def test_reference_round_trip():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    guess = replace(truth, length_offsets=(2e-7, -1.5e-7, 1e-7))
    sol = solve_geometry(ncs, guess, WV)
    assert np.max(np.abs(sol.length_errors(truth))) < 1e-10
    assert sol.k == math.pi / LP
    assert 2 * sol.k == 2 * math.pi / LP
    assert sol.residual_norm >= 0
    assert sol.converged and not sol.poor_fit
    # the solution keeps sub-ulp parts of delta and the lengths as offsets
    recovered = sol.as_constellation(truth)
    wv = WaveVectorPair(sol.k, sol.delta_reference)
    check = mp_residuals(recovered, wv, ncs, sol.delta_offset)
    assert np.max(np.abs(check)) < 1e-9
    assert np.allclose(check, sol.residuals[:-1], atol=1e-12)


@pytest.mark.parametrize("jacobian", ["numeric", "analytic"])
def test_noiseless_round_trips(jacobian):
    for seed in range(20):
        truth, ncs, guess = instance(seed)
        sol = solve_geometry(ncs, guess, WV, SolverOptions(jacobian=jacobian))
        assert np.max(np.abs(sol.length_errors(truth))) < 1e-9
        assert abs(sol.delta - WV.delta) / WV.delta < 1e-12


def test_residual_norm_never_exceeds_start():
    for seed in range(10):
        truth, ncs, guess = instance(seed, noise=1e-3)
        start = np.linalg.norm(forward_residuals(guess, WV, ncs))
        sol = solve_geometry(ncs, guess, WV)
        assert sol.residual_norm <= start


def test_inconsistent_self_equations_flagged():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    y = ncs.measured
    y[6:9] += 0.3
    bad = ncs.with_measured(y)
    sol = solve_geometry(bad, truth, WV)
    assert sol.converged
    assert sol.residual_norm >= 0.3 / math.sqrt(10)
    assert sol.poor_fit


def test_guess_outside_fringe_is_ambiguous():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    far = 0.6 * self_fringe(WV)  # more than pi/4 of self phase
    with pytest.raises(AmbiguityError):
        solve_geometry(ncs, replace(truth, length_offsets=(far, 0.0, 0.0)), WV)


def test_non_convergence_carries_best_iterate():
    truth, ncs, guess = instance(5, noise=1e-3)
    with pytest.raises(ConvergenceError) as info:
        solve_geometry(ncs, guess, WV, SolverOptions(max_iter=1, residual_tol=1e-30, step_tol=1e-300))
    assert info.value.best is not None
    assert info.value.best.iterations == 1


def noise_draws(sigma, draws, seed=7):
    """Length errors and predicted variances for one instance under repeated noise."""
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    rng = np.random.default_rng(seed)
    errs, cov = [], []
    for _ in range(draws):
        y = np.append(sigma * rng.standard_normal(9), 0.0)
        sol = solve_geometry(ncs.with_measured(y), truth, WV, SolverOptions(phase_sigma=sigma))
        errs.append(sol.length_errors(truth))
        cov.append(np.diag(sol.covariance_estimate)[2:])
    return np.asarray(errs), np.asarray(cov)


def test_noisy_errors_match_linearised_covariance():
    errs, cov = noise_draws(1.4e-4, 200)
    rms = math.sqrt(np.mean(errs**2))
    assert rms == pytest.approx(math.sqrt(np.mean(cov)), rel=0.25)


def test_noise_scaling_is_linear():
    sigmas = np.logspace(-6, -2, 5)
    rms, predicted = [], []
    for sigma in sigmas:
        # same seed: identical unit draws scaled by sigma
        errs, cov = noise_draws(sigma, 100)
        rms.append(math.sqrt(np.mean(errs**2)))
        predicted.append(math.sqrt(np.mean(cov)) / sigma)
    fit = np.polyfit(np.log10(sigmas), np.log10(rms), 1)[0]
    assert fit == pytest.approx(1.0, abs=0.02)
    per_sigma = np.array(rms) / sigmas
    assert np.allclose(per_sigma, per_sigma[0], rtol=0.02)
    # slope against the linearised prediction, not 1/(k + delta/2)
    assert per_sigma[0] == pytest.approx(predicted[0], rel=0.25)


def test_resolve_integers_exact_with_zero_uncertainty():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    coarse = truth.with_integers((0,) * 6, (0, 0, 0))
    res = resolve_integers(ncs, coarse, 0.0, WV)
    assert res.integers_cross == truth.integers_cross
    assert res.integers_self == truth.integers_self
    assert res.cost < 1e-18


def test_resolve_integers_recovers_truth():
    fringe = self_fringe(WV)
    u = 0.4 * fringe
    hits = 0
    draws = 1000
    for seed in range(draws):
        rng = np.random.default_rng(seed)
        truth, ncs = synthesize(4e7 + rng.uniform(-10, 10, 3), WV, LP, rng)
        err = rng.uniform(-u, u, 3)
        coarse = replace(truth, length_offsets=tuple(err)).with_integers((0,) * 6, (0, 0, 0))
        try:
            res = resolve_integers(ncs, coarse, u, WV)
        except AmbiguityError:
            continue
        hits += (res.integers_cross == truth.integers_cross and res.integers_self == truth.integers_self)
    assert hits >= 0.99 * draws


def test_resolve_integers_refuses_wide_box():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    fringe = self_fringe(WV)
    with pytest.raises((AmbiguityError, SearchBoundError)):
        resolve_integers(ncs, truth, 10 * fringe, WV)
    with pytest.raises(SearchBoundError):
        resolve_integers(ncs, truth, 1.0, WV, max_candidates=1000)
    with pytest.raises(DomainError):
        resolve_integers(ncs, truth, -1.0, WV)


def test_inject_gw_zero_amplitude():
    truth, _ = synthesize(REFERENCE_LENGTHS, WV, LP)
    assert inject_gw(truth, 0.0, 1.0, (1, -0.5, -0.5), 0.3) == truth


def test_inject_gw_peak_phase():
    c = Constellation((4e7, 4e7, 4e7))
    f = 0.01
    moved = inject_gw(c, 1.25e-23, f, (1, -0.5, -0.5), 1 / (4 * f))
    assert c.length_offsets == (0.0, 0.0, 0.0)
    dl = moved.length_offsets[0]
    assert dl == pytest.approx(4e7 * 1.25e-23, rel=1e-12)
    assert (WV.k + WV.delta / 2) * dl == pytest.approx(3.0e-9, rel=0.05)
    assert moved.length_offsets[1] == pytest.approx(-0.5 * dl, rel=1e-12)


def test_inject_gw_composes_linearly():
    c = Constellation(REFERENCE_LENGTHS)
    w, f, t = (1, -0.5, -0.5), 3.0, 0.0123
    ab = inject_gw(inject_gw(c, 2e-21, f, w, t), 3e-21, f, w, t)
    both = inject_gw(c, 5e-21, f, w, t)
    assert np.allclose(ab.length_offsets, both.length_offsets, rtol=1e-12, atol=0)


def test_inject_gw_validation():
    c = Constellation(REFERENCE_LENGTHS)
    with pytest.raises(DomainError):
        inject_gw(c, 1e-5, 1.0, (1, 0, 0), 0.0)
    with pytest.raises(DomainError):
        inject_gw(c, 1e-20, 1.0, (2, 0, 0), 0.0)


def test_solution_row_layout():
    truth, ncs = synthesize(REFERENCE_LENGTHS, WV, LP)
    sol = solve_geometry(ncs, truth, WV, SolverOptions(phase_sigma=1e-4))
    row = sol.as_row()
    cov_cols = [k for k in row if k.startswith("cov_")]
    assert len(cov_cols) == 25
    assert cov_cols[:5] == ["cov_k_k", "cov_k_delta", "cov_k_l1", "cov_k_l2", "cov_k_l3"]
    assert np.all(sol.covariance_estimate[0] == 0)
    assert np.allclose(sol.covariance_estimate, sol.covariance_estimate.T)
