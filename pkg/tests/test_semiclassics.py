import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from catpump.adiabatic import average_bloch, gaussian_phase_density
from catpump.exceptions import SmallWidthWarning
from catpump.qubit_geometry import MINUS, PLUS, TWO_PI, BHZField, Phase2, geometry_map
from catpump.semiclassics import (PeriodicInterpolator, adiabatic_timescale, band_fields, classical_trajectory,
                                  geometric_pumping, phase_averaged_moments, polarization_prediction,
                                  pumping_rate, purity_prediction, quasi_periods, spreading_prediction)
from catpump.states import gaussian_mode, phase_amplitude, qubit_state, separable_state

from conftest import GOLDEN, OMEGA


@pytest.fixture(scope="module")
def geometry():
    return geometry_map(BHZField(gap=2.0), OMEGA, 0, 64, 64)


class TestInterpolator:
    def test_reproduces_a_smooth_field(self):
        phi = TWO_PI * np.arange(64) / 64
        p1, p2 = np.meshgrid(phi, phi, indexing="ij")
        spline = PeriodicInterpolator(np.sin(p1) * np.cos(2 * p2))
        x = np.array([0.1, 1.7, 3.3, 6.2])
        y = np.array([2.9, 0.05, 4.4, 1.0])
        assert_allclose(spline(x, y), np.sin(x) * np.cos(2 * y), atol=1e-5)
        assert_allclose(spline(x, y, d1=1), np.cos(x) * np.cos(2 * y), atol=1e-3)
        assert_allclose(spline(x, y, d2=1), -2 * np.sin(x) * np.sin(2 * y), atol=1e-3)

    def test_periodic(self):
        values = np.random.default_rng(1).normal(size=(16, 16))
        spline = PeriodicInterpolator(values)
        assert_allclose(spline(0.3 + TWO_PI, -1.2), spline(0.3, TWO_PI - 1.2), atol=1e-12)


class TestTrajectories:
    def test_energy_is_exchanged_with_the_drives(self, geometry):
        phase0 = Phase2(0.4, 2.1)
        times = np.linspace(0, 3, 13)
        trajectory = classical_trajectory(geometry, MINUS, phase0, times)
        fields = band_fields(geometry, MINUS)
        period = TWO_PI / OMEGA[0]
        phi1 = phase0.phi1 - OMEGA[0] * times * period
        phi2 = phase0.phi2 - OMEGA[1] * times * period
        released = fields.energy(phase0.phi1, phase0.phi2) - fields.energy(phi1, phi2)
        assert_allclose(trajectory.n @ OMEGA, released, atol=1e-6)

    def test_transverse_slope_follows_the_chern_number(self, geometry):
        times = np.linspace(0, 30, 301)
        theory = -np.linalg.norm(OMEGA) / OMEGA[0]
        slopes = []
        for a in range(4):
            for b in range(4):
                trajectory = classical_trajectory(geometry, MINUS, Phase2(a * math.pi / 2, b * math.pi / 2), times)
                slopes.append(np.polyfit(times, trajectory.n_perp, 1)[0])
        assert np.mean(slopes) == pytest.approx(theory, rel=0.03)

    def test_uniform_density_pumps_at_the_quantized_rate(self, geometry):
        density = np.ones(geometry.shape)
        moments = phase_averaged_moments(geometry, MINUS, density, [0.0, 1.0, 5.0])
        theory = -np.linalg.norm(OMEGA) / OMEGA[0]
        assert_allclose(moments.mean[1:, 3] / [1.0, 5.0], theory, rtol=1e-3)
        assert_allclose(moments.mean[1:, 2], 0.0, atol=1e-4)

    def test_bands_pump_in_opposite_directions(self, geometry):
        minus = classical_trajectory(geometry, MINUS, Phase2(1.0, 0.5), [0.0, 30.0])
        plus = classical_trajectory(geometry, PLUS, Phase2(1.0, 0.5), [0.0, 30.0])
        assert minus.n_perp[-1] < 0 < plus.n_perp[-1]

    def test_step_halving(self, geometry):
        times = [0.0, 1.0, 2.5]
        coarse = classical_trajectory(geometry, MINUS, Phase2(2.0, 5.0), times)
        fine = classical_trajectory(geometry, MINUS, Phase2(2.0, 5.0), times, step=1 / 800)
        assert_allclose(fine.n, coarse.n, atol=1e-7)

    def test_rejects_decreasing_times(self, geometry):
        with pytest.raises(ValueError):
            classical_trajectory(geometry, MINUS, Phase2(0, 0), [0.0, 2.0, 1.0])

    def test_rows(self, geometry):
        trajectory = classical_trajectory(geometry, MINUS, Phase2(0, 0), [0.0, 1.0])
        assert trajectory.rows()[0] == [0.0, 0.0, 0.0, 0.0, 0.0]


class TestPhaseAverages:
    def test_narrow_density_reduces_to_one_trajectory(self, geometry):
        j, k = 10, 30
        phase0 = Phase2(geometry.phi1[j], geometry.phi2[k])
        density = gaussian_phase_density(64, (phase0.phi1, phase0.phi2), 1e-3)
        times = [0.0, 0.5, 2.0]
        moments = phase_averaged_moments(geometry, MINUS, density, times)
        trajectory = classical_trajectory(geometry, MINUS, phase0, times)
        assert_allclose(moments.mean[:, :2], trajectory.n, atol=1e-9)
        assert_allclose(moments.mean[:, 3], trajectory.n_perp, atol=1e-9)
        assert_allclose(moments.variance, 0.0, atol=1e-9)

    def test_spreading_starts_from_the_initial_width(self, geometry, medium_lattice):
        state = separable_state(gaussian_mode(0, 1.0), gaussian_mode(0, 1.0), qubit_state(0.0), medium_lattice)
        amplitude = phase_amplitude(state, 64, MINUS, geometry)
        prediction = spreading_prediction(geometry, MINUS, amplitude, [0.0, 1.0, 2.0])
        assert_allclose(prediction.variance_term[0], 0.0, atol=1e-12)
        assert_allclose(prediction.metric_term[0], 0.0, atol=1e-12)
        assert_allclose(prediction.correlation_term[0], 0.0, atol=1e-12)
        assert_allclose(prediction.spread[0], prediction.initial)
        assert np.all(prediction.initial > 0)

    def test_spreading_needs_a_matching_band(self, geometry, medium_lattice):
        state = separable_state(gaussian_mode(0, 1.0), gaussian_mode(0, 1.0), qubit_state(0.0), medium_lattice)
        with pytest.raises(ValueError):
            spreading_prediction(geometry, PLUS, phase_amplitude(state, 64, MINUS, geometry), [0.0])

    def test_polarization_starts_at_the_band_average(self, geometry, medium_lattice):
        state = separable_state(gaussian_mode(0, 1.0, 0.5), gaussian_mode(0, 1.0, 1.5), qubit_state(1.0),
                                medium_lattice)
        amplitude = phase_amplitude(state, 64, MINUS, geometry)
        prediction = polarization_prediction(geometry, MINUS, amplitude, [0.0, 1.0])
        expected = average_bloch(np.abs(amplitude.values) ** 2, geometry, MINUS)
        assert_allclose(prediction.polarization[0], expected, atol=1e-6)
        assert np.all(prediction.purity <= 1.0 + 1e-9)


class TestQuasiPeriods:
    def test_golden_ratio(self):
        periods = quasi_periods(1.0, GOLDEN, 8)
        assert [q.p1 for q in periods.entries] == [1, 1, 2, 3, 5, 8]
        assert [q.p2 for q in periods.entries] == [1, 2, 3, 5, 8, 13]
        errors = [q.rephasing_error for q in periods.entries]
        assert all(b < a for a, b in zip(errors, errors[1:]))
        assert periods.as_list()[-1]["T_over_T1"] == 8.0

    def test_rational_ratio_closes(self):
        periods = quasi_periods(2.0, 3.0, 13)
        last = periods.entries[-1]
        assert (last.p1, last.p2) == (2, 3)
        assert last.rephasing_error == pytest.approx(0.0, abs=1e-12)

    def test_rejects_nonpositive_frequencies(self):
        with pytest.raises(ValueError):
            quasi_periods(0.0, 1.0, 5)


class TestTimescalesAndPumping:
    def test_adiabatic_timescale(self, geometry):
        epsilon, tau = adiabatic_timescale(geometry)
        assert 0 < epsilon < 0.2
        assert 3100 / 2 <= tau <= 3100 * 2

    def test_static_drive_never_leaks(self, geometry):
        assert adiabatic_timescale(geometry, omega=(0.0, 0.0)) == (0.0, math.inf)

    def test_pumping_rate(self):
        assert pumping_rate(1.0, 0.0, 1, OMEGA) == pytest.approx(-np.linalg.norm(OMEGA) / TWO_PI)
        assert pumping_rate(0.5, 0.5, 1, OMEGA) == 0.0
        assert pumping_rate(0.0, 1.0, 1, OMEGA) == pytest.approx(np.linalg.norm(OMEGA) / TWO_PI)

    def test_geometric_pumping_averages_to_the_chern_number(self, geometry):
        pumping = geometric_pumping(geometry, MINUS, Phase2(0.3, 0.0), 2, 3)
        assert pumping.theory == pytest.approx(-math.hypot(2, 3))
        assert pumping.average == pytest.approx(pumping.theory, rel=1e-3)
        assert np.ptp(pumping.pumped) > 0

    def test_purity_bound(self, geometry):
        prediction = purity_prediction(geometry, MINUS, Phase2(0.2, 0.9), 0.05 * math.pi, np.linspace(0, 30, 3001))
        assert np.all(prediction.purity <= 1.0)
        assert prediction.satisfies_bound

    def test_purity_warns_outside_small_widths(self, geometry):
        with pytest.warns(SmallWidthWarning):
            purity_prediction(geometry, MINUS, Phase2(0, 0), 0.3 * math.pi, [0.0, 1.0])
