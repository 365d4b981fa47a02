"""Unit scaling, presets and configuration parsing."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants as sc

from blochmass.errors import ConfigError
from blochmass.scenario import (
    AMU,
    PRESET_FIGURES,
    PRESET_NAMES,
    PhysicalParams,
    SolverSettings,
    format_config,
    load_config,
    preset,
    scale,
    scaled,
)


def accel_for(force_scaled, mass, b):
    """Lattice acceleration giving the scaled force ``force_scaled``."""
    return force_scaled * math.pi**3 * sc.hbar**2 / (2.0 * mass**2 * b**3)


class TestScaling:
    def test_rb_preset_values(self):
        sp = scale(preset("rb-s7"))
        assert sp.force == pytest.approx(0.173406, rel=1e-5)
        assert sp.recoil_velocity == pytest.approx(5.8864e-3, rel=1e-4)
        assert sp.tau_B == pytest.approx(486.5e-6, rel=1e-3)

    def test_electron_preset_values(self):
        sp = scale(preset("electron-s10-N0"))
        assert sp.recoil_energy / sc.e == pytest.approx(1.5041, rel=1e-4)
        assert sp.tau_B == pytest.approx(486.5e-15, rel=1e-3)
        assert sp.force == pytest.approx(1.7988e-3, rel=1e-4)

    def test_bloch_period_consistency(self):
        for name in PRESET_NAMES:
            sp = scale(preset(name))
            # h / (b F) in seconds equals 2/F~ in scaled time
            assert sp.tau_B == pytest.approx(sp.tau_B_scaled * sp.time_unit, rel=1e-12)
            assert sp.horizon == pytest.approx(sp.duration * sp.tau_B_scaled)

    def test_zero_force(self):
        p = PhysicalParams(AMU, 400e-9, 5.0, 0.0)
        sp = scale(p)
        assert sp.force == 0.0
        assert math.isinf(sp.tau_B) and math.isinf(sp.horizon)

    def test_force_is_linear_in_acceleration(self):
        base = preset("rb-s7")
        one = scale(base).force
        two = scale(PhysicalParams(base.particle_mass, base.lattice_constant, base.s, 2 * base.accel)).force
        assert two == 2.0 * one

    def test_scaled_helper(self):
        sp = scaled(7.0, 0.2, 0.1)
        assert sp.tau_B_scaled == pytest.approx(10.0)
        assert sp.time_unit == 1.0


@settings(max_examples=50, deadline=None)
@given(
    mass_amu=st.floats(0.5, 300.0),
    b_nm=st.floats(50.0, 2000.0),
    force=st.floats(1e-4, 2.0),
)
def test_scaled_force_round_trip(mass_amu, b_nm, force):
    m, b = mass_amu * AMU, b_nm * 1e-9
    sp = scale(PhysicalParams(m, b, 7.0, accel_for(force, m, b)))
    assert sp.force == pytest.approx(force, rel=1e-13)
    # the scaled Bloch period only depends on F~
    assert sp.tau_B_scaled == pytest.approx(2.0 / force, rel=1e-13)


class TestPresets:
    def test_catalog_complete(self):
        assert set(PRESET_NAMES) == set(PRESET_FIGURES)
        assert len(PRESET_NAMES) == 8

    def test_unknown_preset_lists_names(self):
        with pytest.raises(ConfigError, match="rb-s7"):
            preset("rb-s99")

    def test_preset_labels(self):
        for name in PRESET_NAMES:
            assert preset(name).label == name

    def test_strong_preset_triples_force(self):
        weak, strong = scale(preset("rb-s7")).force, scale(preset("rb-s7-strong")).force
        assert strong / weak == pytest.approx(3.0, rel=1e-12)


class TestValidation:
    @pytest.mark.parametrize(
        "field,value,fragment",
        [
            ("s", -1.0, "s must be >= 0"),
            ("sigma", 0.0, "sigma"),
            ("sigma", 1.5, "sigma"),
            ("accel", -2.0, "accel"),
            ("band", -1, "band"),
            ("duration", 0.0, "duration"),
        ],
    )
    def test_rejects_bad_field(self, field, value, fragment):
        kwargs = dict(particle_mass=AMU, lattice_constant=400e-9, s=5.0, accel=1.0)
        kwargs[field] = value
        with pytest.raises(ConfigError, match=fragment):
            PhysicalParams(**kwargs)

    def test_settings_validation(self):
        with pytest.raises(ConfigError, match="dt"):
            SolverSettings(dt=0.0)
        with pytest.raises(ConfigError, match="samples"):
            SolverSettings(samples=3)


GOOD = """
# rubidium in a 390 nm lattice
mass_amu = 86.909
lattice_nm = 390
s = 7        # recoil energies
accel = 24.2
sigma = 0.2
duration_bloch = 1.0
dt = 0.002
"""


class TestConfig:
    def test_parse_matches_preset(self):
        params, settings_ = load_config(GOOD, label="cfg")
        ref = preset("rb-s7")
        assert scale(params).force == pytest.approx(scale(ref).force, rel=1e-14)
        assert settings_.dt == 0.002
        assert params.label == "cfg"

    def test_round_trip(self):
        params, settings_ = load_config(GOOD)
        again, settings2 = load_config(format_config(params, settings_))
        assert again == params
        assert settings2 == settings_

    @pytest.mark.parametrize(
        "text,fragment",
        [
            ("mass_amu = 1\nlattice_nm = 400\ns = -2\naccel = 1\n", "s must be >= 0"),
            ("mass_amu = 1\nlattice_nm = 400\naccel = 1\n", "s required"),
            ("lattice_nm = 400\ns = 2\naccel = 1\n", "mass_amu required"),
            ("mass_amu = 1\nmass_amu = 2\n", "line 2: duplicate"),
            ("mass_amu = 1\ncolour = blue\n", "line 2: unknown key"),
            ("mass_amu = heavy\n", "line 1: cannot parse"),
            ("mass_amu 1\n", "line 1: expected key = value"),
            ("mass_amu = 1\nlattice_nm = 400\ns = 2\naccel = 1\nduration_bloch = 3\n", "duration_bloch"),
            ("mass_amu = nan\n", "finite"),
        ],
    )
    def test_errors(self, text, fragment):
        with pytest.raises(ConfigError, match=fragment):
            load_config(text)


def test_scale_invariance_of_dimensionless_inputs():
    """Different (mass, b) pairs with equal (s, F~, sigma, N) give the same scaled scenario."""
    cases = [(86.909 * AMU, 390e-9), (22.990 * AMU, 295e-9), (sc.m_e, 0.5e-9)]
    scaled_sets = []
    for m, b in cases:
        sp = scale(PhysicalParams(m, b, 7.0, accel_for(0.17, m, b), sigma=0.2))
        scaled_sets.append(np.array([sp.s, sp.force, sp.sigma, sp.band, sp.tau_B_scaled]))
    for other in scaled_sets[1:]:
        np.testing.assert_allclose(other, scaled_sets[0], rtol=4 * np.finfo(float).eps)
