import math
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from entangled_interferometer.errors import DomainError
from entangled_interferometer.link_budget import (
    LIGHT_SPEED,
    PLANCK,
    LinkBudgetConfig,
    capture_fraction,
    diffraction_divergence,
    divergence_penalty,
    photon_energy,
    run_chain,
)
from entangled_interferometer.optics import OpticalTriplet

TRIPLET = OpticalTriplet(0.53e-6, 0.88e-6, 1.40e-6)


def reference_config(**changes):
    cfg = LinkBudgetConfig(
        laser_power=200.0, tx_aperture=10.0, rx_aperture_sat=1.0,
        uplink_divergence=1e-5, downlink_divergence=1e-4, distance=4e7,
        etalon_q=1e6, spdc_efficiency=1e-9, triplet=TRIPLET,
    )
    return replace(cfg, **changes)


def test_diffraction_divergence_examples():
    assert diffraction_divergence(0.53e-6, 10.0) == 5.3e-8
    assert diffraction_divergence(0.7e-6, 0.7e-6) == 1.0
    assert diffraction_divergence(0.88e-6, 1.0) == pytest.approx(8.8e-7, rel=1e-15)
    with pytest.raises(DomainError):
        diffraction_divergence(0.53e-6, 0.0)
    with pytest.raises(DomainError):
        diffraction_divergence(0.53e-6, -1.0)


def test_capture_fraction_examples():
    assert capture_fraction(1e-5, 4e7, 1.0) == pytest.approx(float(Fraction(1, 400) ** 2), rel=1e-15)
    assert capture_fraction(1e-4, 4e7, 10.0) == pytest.approx(float(Fraction(10, 4000) ** 2), rel=1e-15)
    assert capture_fraction(1e-9, 1e3, 1.0) == 1.0


def test_divergence_penalty_examples():
    assert divergence_penalty(1e-5, 0.5e-7) == pytest.approx(2.5e-5, abs=1e-7)
    assert divergence_penalty(3e-6, 3e-6) == 1.0
    assert divergence_penalty(1e-5, 5.3e-8) == pytest.approx(2.809e-5, rel=1e-12)
    with pytest.raises(DomainError):
        divergence_penalty(1e-8, 5.3e-8)


def test_reference_chain():
    r = run_chain(reference_config())
    assert r.received_power_sat == pytest.approx(1.25e-3, rel=1e-12)
    assert r.circulating_power == pytest.approx(1.25e3, rel=1e-12)
    assert r.pair_power_emitted == pytest.approx(1.25e-6, rel=1e-12)
    # oracle: exact rational arithmetic for the rate
    rate = (Fraction(1.25e-6) * Fraction(0.88e-6) / (Fraction(PLANCK) * Fraction(LIGHT_SPEED))
            * Fraction(10, 4000) ** 2)
    assert r.collected_pair_rate == pytest.approx(float(rate), rel=1e-12)
    assert r.collected_pair_rate == pytest.approx(3.5e7, rel=0.02)
    # pump quanta per second, derived when no override is given
    assert r.pump_photon_rate == pytest.approx(5.34e20, rel=1e-3)


def test_pump_rate_override_is_reported_not_used():
    a = run_chain(reference_config())
    b = run_chain(reference_config(photon_rate_pump=1e21))
    assert b.pump_photon_rate == 1e21
    assert a.collected_pair_rate == b.collected_pair_rate


def test_identity_chain():
    cfg = reference_config(etalon_q=1.0, spdc_efficiency=1.0,
                           uplink_divergence=1e-9, downlink_divergence=1e-9)
    r = run_chain(cfg)
    assert r.received_power_sat == r.circulating_power == r.pair_power_emitted == 200.0


def test_halving_downlink_divergence_quadruples_rate():
    a = run_chain(reference_config())
    b = run_chain(reference_config(downlink_divergence=0.5e-4))
    assert b.collected_pair_rate == pytest.approx(4 * a.collected_pair_rate, rel=1e-12)
    assert (b.received_power_sat, b.circulating_power, b.pair_power_emitted) == (
        a.received_power_sat, a.circulating_power, a.pair_power_emitted)


@pytest.mark.parametrize("field,value", [
    ("spdc_efficiency", 1.5), ("spdc_efficiency", 0.0), ("etalon_q", 0.5),
    ("uplink_divergence", 1.0), ("downlink_divergence", 0.0), ("laser_power", -1.0),
    ("distance", 0.0), ("photon_rate_pump", -3.0),
])
def test_invalid_config(field, value):
    with pytest.raises(DomainError):
        reference_config(**{field: value})


def test_photon_energy():
    assert photon_energy(1e-6) == PLANCK * LIGHT_SPEED / 1e-6
    with pytest.raises(DomainError):
        photon_energy(0.0)


pos = st.floats(0.5, 2.0)
ORDERED = ("received_power_sat", "circulating_power", "pair_power_emitted", "collected_pair_rate")


@given(pos, pos, pos)
def test_monotone_in_gains(fp, fq, fr):
    base = reference_config()
    up = replace(base, laser_power=base.laser_power * max(fp, 1), etalon_q=base.etalon_q * max(fq, 1),
                 spdc_efficiency=base.spdc_efficiency * max(fr, 1))
    a, b = run_chain(base), run_chain(up)
    for name in ORDERED:
        assert getattr(b, name) >= getattr(a, name)


@given(st.floats(1.0, 100.0), st.floats(1.0, 100.0))
def test_non_increasing_in_divergence(su, sd):
    base = reference_config()
    a = run_chain(base)
    b = run_chain(replace(base, uplink_divergence=base.uplink_divergence * su,
                          downlink_divergence=base.downlink_divergence * sd))
    for name in ORDERED:
        assert getattr(b, name) <= getattr(a, name)


@given(st.floats(1e-2, 1e2))
def test_scale_invariance(s):
    base = reference_config()
    a = run_chain(base)
    b = run_chain(replace(base, distance=base.distance * s, uplink_divergence=base.uplink_divergence / s,
                          downlink_divergence=base.downlink_divergence / s))
    assert b.capture_fraction_up == pytest.approx(a.capture_fraction_up, rel=1e-12)
    assert b.capture_fraction_down == pytest.approx(a.capture_fraction_down, rel=1e-12)


@given(st.floats(1.0, 1e4), st.floats(1e-6, 1e-2), st.floats(1.0, 1e8),
       st.floats(1e-12, 1.0), st.floats(1e-7, 1e-2))
def test_fractions_and_dimensional_sanity(power, div, q, rho, down):
    r = run_chain(reference_config(laser_power=power, uplink_divergence=div, etalon_q=q,
                                   spdc_efficiency=rho, downlink_divergence=down))
    assert 0 <= r.capture_fraction_up <= 1 and 0 <= r.capture_fraction_down <= 1
    assert r.received_power_sat <= power
    assert r.circulating_power <= r.received_power_sat * q * (1 + 1e-15)
    assert r.pair_power_emitted <= r.circulating_power
    assert r.collected_pair_rate * photon_energy(TRIPLET.lambda_signal) <= r.pair_power_emitted * (1 + 1e-12)
    assert math.isfinite(r.collected_pair_rate)
