from __future__ import annotations

import math
import warnings

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants as sc

from diode_qopt.material import (
    EPS0_CODATA,
    EPS0_PRINTED,
    DomainError,
    MaterialParams,
    MobilityFit,
    TrapParams,
    UnderflowWarning,
    effective_dos,
    intrinsic_carrier_density,
    intrinsic_fermi_energy,
    low_field_mobility,
    thermal_energy,
)

mpmath.mp.dps = 50

# same constants as the package, re-evaluated in 50-digit arithmetic
K_B = mpmath.mpf(repr(sc.k))
HBAR = mpmath.mpf(repr(sc.h)) / (2 * mpmath.pi)
M_E = mpmath.mpf(repr(sc.m_e))
Q = mpmath.mpf(repr(sc.e))


def dos_oracle(T, m):
    arg = 2 * mpmath.mpf(m) * M_E * K_B * mpmath.mpf(T) / (mpmath.pi * HBAR**2)
    return mpmath.mpf("0.25") * arg ** mpmath.mpf("1.5") * mpmath.mpf("1e-6")


def test_effective_dos_matches_high_precision():
    m = MaterialParams()
    for mass in (m.m_c, m.m_v):
        ref = dos_oracle(300, mass)
        assert effective_dos(300.0, mass) == pytest.approx(float(ref), rel=1e-12)


def test_effective_dos_temperature_scaling():
    assert effective_dos(1200.0, 0.77) == pytest.approx(8 * effective_dos(300.0, 0.77), rel=1e-13)


def test_effective_dos_vanishes_at_low_temperature():
    assert effective_dos(1e-9, 0.77) < 1e-10 * effective_dos(300.0, 0.77)


@pytest.mark.parametrize("T, mass", [(0.0, 1.0), (-3.0, 1.0), (300.0, 0.0), (300.0, -1.0)])
def test_effective_dos_domain(T, mass):
    with pytest.raises(DomainError):
        effective_dos(T, mass)


def test_intrinsic_density_zero_gap():
    m = MaterialParams()
    expected = math.sqrt(effective_dos(300.0, m.m_c) * effective_dos(300.0, m.m_v))
    assert intrinsic_carrier_density(300.0, 0.0, m) == pytest.approx(expected, rel=1e-14)


def test_intrinsic_density_gap_ratio():
    m = MaterialParams()
    kT = thermal_energy(300.0)
    r = intrinsic_carrier_density(300.0, 1.0, m) / intrinsic_carrier_density(300.0, 1.2, m)
    assert r == pytest.approx(math.exp(0.2 / (2 * kT)), rel=1e-12)


def test_intrinsic_density_log_domain_oracle():
    m = MaterialParams()
    kT = K_B * 300 / Q
    log_ni = (mpmath.log(dos_oracle(300, m.m_c)) + mpmath.log(dos_oracle(300, m.m_v))) / 2 - mpmath.mpf(m.E_g) / (2 * kT)
    assert intrinsic_carrier_density(300.0, m.E_g, m) == pytest.approx(float(mpmath.exp(log_ni)), rel=1e-10)


def test_intrinsic_density_underflow_flag():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert intrinsic_carrier_density(1.0, 3.26) == 0.0
    assert any(issubclass(w.category, UnderflowWarning) for w in caught)


def test_fermi_energy_equal_masses_is_midgap():
    m = MaterialParams(m_c=0.5, m_v=0.5)
    assert intrinsic_fermi_energy(300.0, m) == 0.5 * (m.eps_c + m.eps_v)


def test_fermi_energy_low_temperature_limit():
    m = MaterialParams()
    assert intrinsic_fermi_energy(1e-6, m) == pytest.approx(0.5 * (m.eps_c + m.eps_v), abs=1e-9)


def test_fermi_energy_direct_evaluation():
    m = MaterialParams()
    kT = K_B * 300 / Q
    ref = (mpmath.mpf(m.eps_c) + m.eps_v) / 2 + kT / 2 * mpmath.log(dos_oracle(300, m.m_v) / dos_oracle(300, m.m_c))
    assert abs(intrinsic_fermi_energy(300.0, m) - float(ref)) < 1e-12


def test_permittivity_switch():
    assert MaterialParams().eps0 == EPS0_CODATA
    printed = MaterialParams(printed_eps0=True)
    assert printed.eps0 == EPS0_PRINTED
    assert printed.permittivity == pytest.approx(9.66 * 8.99e-12)


@pytest.mark.parametrize("kwargs", [
    {"kappa": 0.0}, {"E_g": -1.0}, {"eps_a": 3.5}, {"eps_d": 0.1}, {"m_c": 0.0}, {"E_BD": 0.0},
    {"lattice_const": -1.0}, {"eps_c": 3.0},
])
def test_material_invariants(kwargs):
    with pytest.raises(DomainError):
        MaterialParams(**kwargs)


def test_sub_block_invariants():
    with pytest.raises(DomainError):
        MobilityFit(mu_min=1000.0, mu_max=950.0)
    with pytest.raises(DomainError):
        TrapParams(D_depth=4.0, fwhm=5.0)
    with pytest.raises(DomainError):
        TrapParams(N_t=-1.0)
    with pytest.raises(DomainError):
        MaterialParams(trap=TrapParams(eps_t0=3.5))


def test_mobility_midpoint_at_reference_doping():
    fit = MobilityFit()
    assert low_field_mobility(fit.N_ref, fit) == pytest.approx(fit.mu_min + 0.5 * (fit.mu_max - fit.mu_min))


@settings(max_examples=60, deadline=None)
@given(T=st.floats(1.0, 2000.0), factor=st.floats(1.001, 3.0), m=st.floats(0.05, 5.0))
def test_dos_increasing(T, factor, m):
    assert effective_dos(T * factor, m) > effective_dos(T, m)
    assert effective_dos(T, m * factor) > effective_dos(T, m)


@settings(max_examples=60, deadline=None)
@given(T=st.floats(150.0, 2000.0), factor=st.floats(1.01, 2.0), E_g=st.floats(0.5, 3.26))
def test_intrinsic_density_monotone(T, factor, E_g):
    m = MaterialParams()
    assert intrinsic_carrier_density(T * factor, E_g, m) > intrinsic_carrier_density(T, E_g, m)
    assert intrinsic_carrier_density(T, E_g * factor ** 0.1, m) < intrinsic_carrier_density(T, E_g, m)


@settings(max_examples=60, deadline=None)
@given(T=st.floats(1.0, 2000.0))
def test_outputs_finite(T):
    m = MaterialParams()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderflowWarning)
        values = (effective_dos(T, m.m_c), effective_dos(T, m.m_v), intrinsic_carrier_density(T, m.E_g, m),
                  intrinsic_fermi_energy(T, m))
    assert all(math.isfinite(v) for v in values)
