"""SSD timing model: sizing formula, closed-form fraction, event simulator."""

import math
from fractions import Fraction

import numpy as np
import pytest

import oracles
from tierloader.storage import (
    SsdSpec,
    _frac,
    achieved_fraction,
    fetch_total_us,
    preset,
    required_accesses,
    simulate_fetch,
)

OPTANE = preset("intel-optane")
PRO980 = preset("samsung-980pro")


def test_decimal_reading_of_floats():
    assert _frac(0.95) == Fraction(19, 20)
    assert _frac(25e-6) == Fraction(1, 40_000)
    assert _frac(Fraction(3, 7)) == Fraction(3, 7)
    assert _frac(3) == Fraction(3)


# -- required_accesses ---------------------------------------------------------

def test_required_accesses_optane_at_95():
    # 19/20 over 1/20 is 19; 19 * 30us * 1.5e6/s = 855, no rounding slack
    assert required_accesses(OPTANE, 0.95) == 855


def test_required_accesses_980pro_at_half():
    # 1 * 354us * 7e5/s = 247.8, rounded up
    assert required_accesses(PRO980, 0.5) == 248


def test_required_accesses_linear_in_device_count():
    for k in (2, 3, 8):
        assert required_accesses(preset("intel-optane", n_ssd=k), 0.95) == 855 * k
    spec1 = SsdSpec(iop_peak=3.3e5, t_init=100e-6, t_term=7e-6)
    spec4 = SsdSpec(iop_peak=3.3e5, n_ssd=4, t_init=100e-6, t_term=7e-6)
    for f in (0.2, 0.5, 0.9, 0.97):
        assert required_accesses(spec4, f) == 4 * required_accesses(spec1, f)


def test_required_accesses_domain_and_monotonicity():
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            required_accesses(OPTANE, bad)
    fractions = [0.1, 0.3, 0.5, 0.8, 0.9, 0.95, 0.99]
    needs = [required_accesses(OPTANE, f) for f in fractions]
    assert needs == sorted(needs)
    slower = SsdSpec(iop_peak=OPTANE.iop_peak, t_init=OPTANE.t_init * 2,
                     t_term=OPTANE.t_term)
    assert required_accesses(slower, 0.9) > required_accesses(OPTANE, 0.9)


# -- achieved_fraction ---------------------------------------------------------

def test_fraction_zero_and_strict_monotone():
    assert achieved_fraction(OPTANE, 0) == 0.0
    prev = 0.0
    for n in (1, 2, 4, 64, 855, 4096):
        cur = achieved_fraction(OPTANE, n)
        assert cur > prev
        prev = cur
    with pytest.raises(ValueError):
        achieved_fraction(OPTANE, -1)


def test_fraction_at_855_is_exact_operating_point():
    # steady phase 570us inside a 600us envelope
    assert achieved_fraction(OPTANE, 855) == pytest.approx(0.95, abs=1e-15)


def test_roundtrip_fraction_of_required_count():
    for spec in (OPTANE, PRO980, SsdSpec(iop_peak=9e5, n_ssd=3, t_init=60e-6)):
        for f in (0.5, 0.8, 0.9, 0.95, 0.99):
            n = required_accesses(spec, f)
            got = achieved_fraction(spec, n)
            assert f <= got <= f + 0.01


# -- simulate_fetch ------------------------------------------------------------

def test_simulate_zero_accesses():
    t = simulate_fetch(OPTANE, 0)
    assert t.total == pytest.approx(30e-6, abs=1e-18)
    assert t.achieved_fraction == 0.0 and t.achieved_iops == 0.0


def test_simulate_855_hits_the_600us_envelope():
    t = simulate_fetch(OPTANE, 855)
    assert t.total == pytest.approx(600e-6, rel=1e-12)
    assert t.achieved_fraction == pytest.approx(0.95, abs=1e-12)
    assert t.t_init == pytest.approx(25e-6) and t.t_term == pytest.approx(5e-6)


def test_simulate_total_closed_form_when_load_divides_evenly():
    spec = SsdSpec(iop_peak=2e5, n_ssd=4, t_init=40e-6, t_term=8e-6)
    for n in (0, 4, 64, 400):
        t = simulate_fetch(spec, n)
        expect = 40e-6 + n / (2e5 * 4) + 8e-6
        assert t.total == pytest.approx(expect, rel=1e-12)


def test_simulate_and_closed_form_agree_on_sweep():
    for spec in (OPTANE, PRO980):
        for k in range(4, 15):
            n = 1 << k
            sim = simulate_fetch(spec, n).achieved_fraction
            model = achieved_fraction(spec, n)
            assert abs(sim - model) <= 0.02


def test_event_simulator_matches_greedy_oracle():
    rng = np.random.default_rng(31)
    for _ in range(40):
        spec = SsdSpec(
            iop_peak=float(rng.integers(1, 40) * 5e4),
            n_ssd=int(rng.integers(1, 5)),
            t_init=round(float(rng.uniform(0, 400)), 1) * 1e-6,
            t_term=round(float(rng.uniform(0, 12)), 1) * 1e-6,
        )
        n = int(rng.integers(0, 600))
        want_us = oracles.greedy_fetch_us(spec.iop_peak, spec.n_ssd,
                                          spec.t_init, spec.t_term, n)
        assert fetch_total_us(spec, n) == want_us
        got = simulate_fetch(spec, n).total
        assert math.isclose(got, float(want_us) / 1e6, rel_tol=1e-12)


def test_fetch_total_us_equals_event_loop_exactly():
    for spec in (OPTANE, PRO980, SsdSpec(iop_peak=7.7e5, n_ssd=3)):
        for n in (0, 1, 2, 854, 855, 1000):
            sim = simulate_fetch(spec, n)
            assert math.isclose(sim.total * 1e6, float(fetch_total_us(spec, n)),
                                rel_tol=1e-12)


# -- presets and spec hygiene --------------------------------------------------

def test_presets_expose_their_device_parameters():
    assert OPTANE.iop_peak == 1.5e6
    assert OPTANE.t_init == pytest.approx(25e-6)
    assert PRO980.iop_peak == 7.0e5
    assert PRO980.t_init == pytest.approx(349e-6)  # device latency + launch
    assert OPTANE.t_term == PRO980.t_term == pytest.approx(5e-6)
    # 4KB pages at 1.5M IOPs is the advertised ~6 GB/s class device
    assert OPTANE.peak_bandwidth == 1.5e6 * 4096
    assert 6.0e9 <= OPTANE.peak_bandwidth <= 6.3e9


def test_preset_lookup_and_widening():
    wide = preset("samsung-980pro", n_ssd=4)
    assert wide.n_ssd == 4 and wide.iop_peak == PRO980.iop_peak
    with pytest.raises(ValueError, match="unknown preset"):
        preset("floppy-disk")


def test_spec_validation():
    with pytest.raises(ValueError):
        SsdSpec(iop_peak=0)
    with pytest.raises(ValueError):
        SsdSpec(iop_peak=1e6, n_ssd=0)
    with pytest.raises(ValueError):
        SsdSpec(iop_peak=1e6, t_init=-1e-6)
    with pytest.raises(ValueError):
        SsdSpec(iop_peak=1e6, page_bytes=0)
