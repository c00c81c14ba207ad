import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bomdlab.errors import InvalidInputError
from bomdlab.units import MassMetric, PhysicalParams, mass_metric, nondimensionalize

masses = st.lists(st.floats(1.0, 1e5), min_size=1, max_size=5)


@given(masses)
def test_mass_ratios_average_to_one(ms):
    d = nondimensionalize(PhysicalParams(nuclear_masses=tuple(ms)))
    assert np.mean(d.mass_ratios) == pytest.approx(1.0, rel=1e-13)
    assert d.hbar ** 2 == pytest.approx(d.mu, rel=1e-14)


@given(masses, st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_time_round_trip(ms, energy, length):
    d = nondimensionalize(PhysicalParams(nuclear_masses=tuple(ms), hartree_energy=energy,
                                         bohr_radius=length))
    t = np.linspace(0.0, 7.0, 5)
    np.testing.assert_allclose(d.to_physical_time(d.to_dimensionless_time(t)), t, rtol=1e-14)


def test_proton_mass_ratio():
    d = nondimensionalize(PhysicalParams(nuclear_masses=(1836.0, 1836.0)))
    assert d.mu == pytest.approx(1 / 1836, rel=1e-15)
    assert d.mass_ratios == (1.0, 1.0)


@pytest.mark.parametrize("kwargs", [
    dict(nuclear_masses=(0.0,)),
    dict(nuclear_masses=(1.0, -2.0)),
    dict(nuclear_masses=(1.0,), hartree_energy=0.0),
    dict(nuclear_masses=(1.0,), bohr_radius=np.nan),
])
def test_rejects_nonpositive_parameters(kwargs):
    with pytest.raises(InvalidInputError):
        PhysicalParams(**kwargs)


def test_metric_raise_lower_inverse():
    g = MassMetric([1.0, 2.0, 4.0])
    v = np.array([1.0, -1.0, 0.5])
    np.testing.assert_allclose(g.raise_(g.lower(v)), v)
    assert g.kinetic(g.lower(v)) == pytest.approx(0.5 * g.g(v, v))
    assert g.inv_norm(g.lower(v)) == pytest.approx(g.norm(v))


def test_metric_repeats_masses_per_spatial_dimension():
    d = nondimensionalize(PhysicalParams(nuclear_masses=(1.0, 3.0)))
    g = mass_metric(d, spatial_dim=3)
    np.testing.assert_allclose(g.masses, [0.5] * 3 + [1.5] * 3)
    with pytest.raises(InvalidInputError):
        mass_metric(d, spatial_dim=0)


def test_metric_rejects_bad_masses():
    for bad in ([], [1.0, 0.0], [[1.0]], [np.inf]):
        with pytest.raises(InvalidInputError):
            MassMetric(bad)
