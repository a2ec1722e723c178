import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from catpump.exceptions import OutOfRange, TruncationLoss, WidthTooSmall
from catpump.qubit_geometry import MINUS, PLUS, TWO_PI, geometry_map
from catpump.rotor_lattice import LatticeTruncation, build_lattice
from catpump.states import (SNAPSHOT_COLUMNS, TotalState, band_spinor_field, fock_mode, gaussian_mode,
                            number_amplitudes, phase_amplitude, quasi_fock_mode, qubit_state, separable_state)

from conftest import OMEGA


class TestModes:
    @pytest.mark.parametrize("dn", [1.0, 2.5, 5.0, 10.0])
    def test_gaussian_moments(self, dn):
        mode = gaussian_mode(3, dn)
        assert_allclose(np.sum(mode.probabilities), 1.0, atol=1e-14)
        assert mode.number_mean() == pytest.approx(3.0, abs=1e-10)
        assert mode.number_std() == pytest.approx(dn, rel=1e-6)
        assert mode.mass_loss < 1e-8

    @pytest.mark.parametrize("dn", [0.5, 1.0, 2.0, 5.0, 10.0])
    def test_heisenberg_product(self, dn):
        mode = gaussian_mode(0, dn)
        assert mode.number_std() * mode.phase_std() >= 0.5 * (1 - 0.05)

    @pytest.mark.parametrize("phi0", [0.0, 0.7, -2.0])
    def test_phase_peak_sits_at_phi0(self, phi0):
        mode = gaussian_mode(0, 3.0, phi0)
        resultant = mode.phase_mean_resultant()
        assert math.remainder(np.angle(resultant) - phi0, TWO_PI) == pytest.approx(0.0, abs=1e-10)

    def test_fock_mode(self):
        mode = fock_mode(4)
        assert mode.number_std() == 0.0
        assert mode.phase_std() == math.inf
        assert gaussian_mode(4, 0.0).n_values.tolist() == [4]

    def test_fock_mode_outside_bounds(self):
        with pytest.raises(OutOfRange):
            fock_mode(4, bounds=(-2, 2))

    def test_negative_width(self):
        with pytest.raises(OutOfRange):
            gaussian_mode(0, -1.0)

    def test_narrow_support_loses_mass(self):
        with pytest.raises(TruncationLoss):
            gaussian_mode(0, 5.0, support=(-5, 5))

    def test_single_site_support_for_a_wide_mode(self):
        with pytest.raises(WidthTooSmall):
            gaussian_mode(0, 1.0, support=(0, 0))

    def test_quasi_fock_is_delocalized(self):
        mode = quasi_fock_mode(0)
        assert mode.dn == pytest.approx(1 / TWO_PI)
        assert mode.phase_std() > 1.0
        assert np.max(mode.probabilities) < 1.0


class TestQubit:
    @pytest.mark.parametrize("theta, phi, expected", [
        (0.0, 0.0, [0, 0, 1]),
        (math.pi, 0.0, [0, 0, -1]),
        (math.pi / 2, 0.0, [1, 0, 0]),
        (math.pi / 2, math.pi / 2, [0, 1, 0]),
    ])
    def test_bloch_vector(self, theta, phi, expected):
        assert_allclose(qubit_state(theta, phi).bloch, expected, atol=1e-14)

    def test_pure(self):
        assert qubit_state(1.1, 0.3).purity == pytest.approx(1.0)


class TestTotalState:
    def test_separable_state_is_normalized(self, medium_lattice):
        state = separable_state(gaussian_mode(0, 1.0), gaussian_mode(0, 1.0), qubit_state(0.4), medium_lattice)
        assert state.norm() == pytest.approx(1.0)
        assert state.mass_loss < 1e-6

    def test_separable_state_outside_lattice(self, small_lattice):
        with pytest.raises(TruncationLoss):
            separable_state(gaussian_mode(0, 5.0), gaussian_mode(0, 5.0), qubit_state(0.0), small_lattice)

    def test_spin_is_fast_index(self, small_lattice):
        vector = np.zeros(small_lattice.dimension, dtype=complex)
        vector[1] = 1.0
        state = TotalState(small_lattice, vector)
        assert state.spinors[0, 1] == 1.0

    def test_wrong_dimension(self, small_lattice):
        with pytest.raises(ValueError):
            TotalState(small_lattice, np.zeros(3))

    def test_snapshot_rows(self, small_lattice):
        state = separable_state(fock_mode(0), fock_mode(0), qubit_state(math.pi / 2), small_lattice)
        rows = state.snapshot_rows()
        assert len(rows) == small_lattice.size and len(rows[0]) == len(SNAPSHOT_COLUMNS)
        centre = rows[small_lattice.index_of(0, 0)]
        assert centre[2] == pytest.approx(1 / math.sqrt(2))
        assert centre[4] == pytest.approx(1 / math.sqrt(2))


class TestPhaseAmplitude:
    m = 32

    def test_weight_is_preserved(self, medium_lattice):
        state = separable_state(gaussian_mode(0, 1.0), gaussian_mode(0, 1.0), qubit_state(0.4), medium_lattice)
        assert phase_amplitude(state, self.m).total_weight() == pytest.approx(1.0, abs=1e-6)

    def test_fock_state_is_flat_in_phase(self, medium_lattice):
        state = separable_state(fock_mode(2), fock_mode(-1), qubit_state(0.0), medium_lattice)
        density = phase_amplitude(state, self.m).density()
        assert_allclose(density, 1 / TWO_PI**2, atol=1e-14)

    def test_gaussian_is_localized_at_phi0(self, medium_lattice):
        phi0 = TWO_PI * 5 / self.m
        state = separable_state(gaussian_mode(0, 1.5, phi0), gaussian_mode(0, 1.5), qubit_state(0.0), medium_lattice)
        density = phase_amplitude(state, self.m).density()
        assert np.unravel_index(np.argmax(density), density.shape) == (5, 0)

    def test_inverse_transform(self, medium_lattice):
        state = separable_state(gaussian_mode(1, 1.0, 0.3), gaussian_mode(-2, 1.0), qubit_state(1.0, 0.5),
                                medium_lattice)
        back = number_amplitudes(phase_amplitude(state, self.m), medium_lattice)
        assert_allclose(back.vector, state.vector, atol=1e-12)

    def test_grid_values_match_the_periodic_fourier_sum(self, medium_lattice):
        state = separable_state(gaussian_mode(1, 1.0, 0.3), gaussian_mode(-2, 1.0), qubit_state(1.0, 0.5),
                                medium_lattice)
        amplitude = phase_amplitude(state, self.m)
        spinors = state.spinors
        for j, k in [(0, 0), (3, 17), (31, 5)]:
            phi = np.array([amplitude.phi[j], amplitude.phi[k]])
            for shift in ([0.0, 0.0], [TWO_PI, 0.0], [0.0, TWO_PI]):
                # ⟨Φ|N⟩ = e^{−iN·Φ}/(2π)
                kernel = np.exp(-1j * medium_lattice.sites @ (phi + shift)) / TWO_PI
                assert_allclose(kernel @ spinors, amplitude.values[:, j, k], atol=1e-10)

    def test_grid_must_cover_the_lattice(self, medium_lattice):
        state = separable_state(fock_mode(0), fock_mode(0), qubit_state(0.0), medium_lattice)
        with pytest.raises(ValueError):
            phase_amplitude(state, 8)

    @settings(max_examples=20, deadline=None)
    @given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
           st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
    def test_transform_is_linear(self, a, b):
        lattice = build_lattice(LatticeTruncation.enclosing(5.0, 5.0, tuple(OMEGA)))
        first = separable_state(fock_mode(0), fock_mode(1), qubit_state(0.3), lattice)
        second = separable_state(fock_mode(-1), fock_mode(0), qubit_state(2.0), lattice)
        combined = first.with_vector(a * first.vector + b * second.vector)
        expected = a * phase_amplitude(first, 16).values + b * phase_amplitude(second, 16).values
        assert_allclose(phase_amplitude(combined, 16).values, expected, atol=1e-10)

    def test_band_densities_split_the_total(self, medium_lattice, bhz):
        state = separable_state(quasi_fock_mode(0), quasi_fock_mode(0), qubit_state(math.pi / 2), medium_lattice)
        geometry = geometry_map(bhz, (0.0, 0.0), 0, self.m, self.m)
        total = phase_amplitude(state, self.m).density()
        minus = phase_amplitude(state, self.m, MINUS, geometry).density()
        plus = phase_amplitude(state, self.m, PLUS, geometry).density()
        assert_allclose(minus + plus, total, atol=1e-3 * total.max())

    def test_band_spinor_is_gauge_invariant(self, medium_lattice, bhz):
        state = separable_state(gaussian_mode(0, 1.0), gaussian_mode(0, 1.0), qubit_state(0.7), medium_lattice)
        geometry = geometry_map(bhz, (0.0, 0.0), 0, self.m, self.m)
        amplitude = phase_amplitude(state, self.m, MINUS, geometry)
        phases = np.exp(1j * np.random.default_rng(1).uniform(0, TWO_PI, geometry.shape))
        regauged_states = geometry.states.copy()
        regauged_states[:, :, 0] *= phases[..., None]
        regauged = type(geometry)(**{**geometry.__dict__, "states": regauged_states})
        assert_allclose(band_spinor_field(phase_amplitude(state, self.m, MINUS, regauged), regauged),
                        band_spinor_field(amplitude, geometry), atol=1e-12)

    def test_band_resolution_needs_matching_grid(self, medium_lattice, bhz):
        state = separable_state(fock_mode(0), fock_mode(0), qubit_state(0.0), medium_lattice)
        geometry = geometry_map(bhz, (0.0, 0.0), 0, 16, 16)
        with pytest.raises(ValueError):
            phase_amplitude(state, self.m, MINUS, geometry)
