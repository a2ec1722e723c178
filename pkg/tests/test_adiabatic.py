import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from catpump.adiabatic import (average_bloch, band_cuts, bhattacharyya, build_projector, fidelity,
                               gaussian_phase_density, halfspace_split, predicted_weight, project,
                               projector_residuals, separation_time, symmetric_width, weight_conservation_drift,
                               weight_metric_approx, zero_frequency_spectrum)
from catpump.exceptions import OutOfRange, SmallWidthWarning, ZeroState
from catpump.propagation import build_propagator
from catpump.qubit_geometry import MINUS, PLUS, TWO_PI, BHZField, geometry_map
from catpump.rotor_lattice import LatticeTruncation, assemble_zero_frequency, build_lattice
from catpump.states import TotalState, fock_mode, gaussian_mode, qubit_state, separable_state

from conftest import OMEGA


@pytest.fixture(scope="module")
def spectrum():
    lattice = build_lattice(LatticeTruncation.enclosing(9.0, 11.0, tuple(OMEGA)))
    return zero_frequency_spectrum(lattice, BHZField(gap=2.0))


@pytest.fixture(scope="module")
def bare_geometry():
    return geometry_map(BHZField(gap=2.0), (0.0, 0.0), 0, 128, 128)


@pytest.fixture
def sample(spectrum):
    rng = np.random.default_rng(3)
    vector = rng.normal(size=spectrum.lattice.dimension) + 1j * rng.normal(size=spectrum.lattice.dimension)
    return TotalState(spectrum.lattice, vector / np.linalg.norm(vector))


class TestSpectrum:
    def test_band_cuts_sit_at_unit_energy(self, bhz):
        assert_allclose(band_cuts(bhz), (-1.0, 1.0), atol=1e-12)

    def test_classification_is_complete(self, spectrum):
        counts = spectrum.counts()
        assert sum(counts.values()) == spectrum.lattice.dimension
        assert counts["ground"] > 0 and counts["excited"] > 0

    def test_open_lattice_has_edge_states(self, spectrum):
        # Bands with nonzero Chern number leave in-gap states on the truncation edge.
        assert spectrum.counts()["edge"] > 0
        assert np.all(np.abs(spectrum.energies[spectrum.edge]) <= 1.0)


class TestProjector:
    def test_order_zero_is_a_spectral_projector(self, spectrum, bhz, sample):
        operator = assemble_zero_frequency(spectrum.lattice, bhz)
        residuals = projector_residuals(build_projector(spectrum, OMEGA, MINUS, 0), operator, sample)
        assert residuals.idempotence < 1e-10
        assert residuals.commutator < 1e-9

    def test_weights_add_up_with_the_edge_set(self, spectrum, sample):
        _, w_minus = project(sample, build_projector(spectrum, OMEGA, MINUS, 0))
        _, w_plus = project(sample, build_projector(spectrum, OMEGA, PLUS, 0))
        edge = spectrum.vectors[:, spectrum.edge]
        w_edge = float(np.sum(np.abs(edge.conj().T @ sample.vector) ** 2))
        assert w_minus + w_plus + w_edge == pytest.approx(1.0, abs=1e-10)

    def test_ground_eigenvector_lies_in_the_ground_band(self, spectrum):
        vector = spectrum.vectors[:, np.flatnonzero(spectrum.ground)[0]]
        state = TotalState(spectrum.lattice, vector)
        assert project(state, build_projector(spectrum, OMEGA, MINUS, 0))[1] == pytest.approx(1.0)
        assert project(state, build_projector(spectrum, OMEGA, PLUS, 0))[1] == pytest.approx(0.0, abs=1e-20)

    def test_order_one_projector_is_hermitian(self, spectrum):
        projector = build_projector(spectrum, OMEGA, MINUS, 1)
        rng = np.random.default_rng(5)
        a, b = (rng.normal(size=spectrum.lattice.dimension) + 0j for _ in range(2))
        assert np.vdot(a, projector.apply(b)) == pytest.approx(np.vdot(projector.apply(a), b))

    def test_order_one_correction_scales_with_frequency(self, spectrum, sample):
        bare = build_projector(spectrum, OMEGA, MINUS, 0).apply(sample.vector)
        corrections = [np.linalg.norm(build_projector(spectrum, scale * OMEGA, MINUS, 1).apply(sample.vector) - bare)
                       for scale in (1.0, 0.5)]
        assert corrections[1] == pytest.approx(corrections[0] / 2, rel=1e-10)

    def test_rejects_other_orders(self, spectrum):
        with pytest.raises(ValueError):
            build_projector(spectrum, OMEGA, MINUS, 2)

    def test_lattice_mismatch(self, spectrum, small_lattice):
        state = separable_state(fock_mode(0), fock_mode(0), qubit_state(0.0), small_lattice)
        with pytest.raises(ValueError):
            project(state, build_projector(spectrum, OMEGA, MINUS, 0))

    def test_weight_is_conserved_when_the_projector_commutes(self, spectrum, sample):
        propagator = build_propagator(assemble_zero_frequency(spectrum.lattice, BHZField(gap=2.0)), "spectral")
        projector = build_projector(spectrum, OMEGA, MINUS, 0)
        assert weight_conservation_drift(sample, projector, propagator, [0.25, 0.5, 1.0]) < 1e-10

    def test_drift_is_zero_at_the_initial_time(self, spectrum, sample):
        propagator = build_propagator(assemble_zero_frequency(spectrum.lattice, BHZField(gap=2.0)), "spectral")
        projector = build_projector(spectrum, OMEGA, PLUS, 0)
        assert weight_conservation_drift(sample, projector, propagator, [0.0]) == pytest.approx(0.0, abs=1e-12)


class TestSplitDiagnostics:
    def test_halfspace_split(self, medium_lattice):
        state = separable_state(gaussian_mode(0, 1.0), gaussian_mode(0, 1.0), qubit_state(0.3), medium_lattice)
        below, above, weight = halfspace_split(state, OMEGA, 0.0)
        assert weight + above.squared_norm() == pytest.approx(1.0)
        assert 0.3 < weight < 0.7
        assert halfspace_split(state, OMEGA, 100.0)[2] == pytest.approx(1.0)
        assert np.vdot(below.vector, above.vector) == 0

    def test_fidelity(self, medium_lattice):
        up = separable_state(fock_mode(0), fock_mode(0), qubit_state(0.0), medium_lattice)
        down = separable_state(fock_mode(0), fock_mode(0), qubit_state(math.pi, 0.0), medium_lattice)
        assert fidelity(up, up.with_vector(2j * up.vector)) == pytest.approx(1.0)
        assert fidelity(up, down) == pytest.approx(0.0, abs=1e-30)
        with pytest.raises(ZeroState):
            fidelity(up, up.with_vector(np.zeros_like(up.vector)))

    def test_bhattacharyya(self, medium_lattice):
        centred = separable_state(fock_mode(0), fock_mode(0), qubit_state(0.0), medium_lattice)
        moved = separable_state(fock_mode(-5), fock_mode(3), qubit_state(0.0), medium_lattice)
        assert bhattacharyya(centred, centred, OMEGA) == pytest.approx(1.0)
        assert bhattacharyya(centred, moved, OMEGA) == pytest.approx(0.0)

    def test_separation_falls_back(self, medium_lattice):
        state = separable_state(gaussian_mode(0, 1.0), gaussian_mode(0, 1.0), qubit_state(0.0), medium_lattice)
        t_sep, detected = separation_time([state, state], [state, state], OMEGA, [0.0, 1.0])
        assert not detected
        assert t_sep == 8.0


class TestPhaseDensity:
    def test_normalized_and_centred(self):
        density = gaussian_phase_density(64, (1.0, 2.0), 0.3)
        cell = (TWO_PI / 64) ** 2
        assert density.sum() * cell == pytest.approx(1.0)
        j, k = np.unravel_index(np.argmax(density), density.shape)
        assert abs(j * TWO_PI / 64 - 1.0) < TWO_PI / 64
        assert abs(k * TWO_PI / 64 - 2.0) < TWO_PI / 64

    def test_reflection_symmetric_about_the_centre(self):
        density = gaussian_phase_density(32, (0.0, 0.0), 0.5)
        assert_allclose(density, np.roll(density[::-1], 1, axis=0), rtol=1e-12)
        assert_allclose(density, density.T, rtol=1e-12)

    def test_rejects_nonpositive_width(self):
        with pytest.raises(OutOfRange):
            gaussian_phase_density(32, (0.0, 0.0), (0.1, 0.0))


class TestWeights:
    def test_aligned_qubit_in_a_narrow_packet(self, bare_geometry):
        j, k = 20, 45
        polarization = bare_geometry.bloch[j, k, 0]
        phase0 = (bare_geometry.phi1[j], bare_geometry.phi2[k])
        density = gaussian_phase_density(128, phase0, 1e-3)
        assert predicted_weight(density, bare_geometry, polarization) == pytest.approx(1.0, abs=1e-9)
        assert predicted_weight(density, bare_geometry, polarization, PLUS) == pytest.approx(0.0, abs=1e-9)

    def test_small_width_matches_the_metric(self, bare_geometry):
        j, k = 16, 40
        dphi = 0.02 * math.pi
        phase0 = (bare_geometry.phi1[j], bare_geometry.phi2[k])
        density = gaussian_phase_density(128, phase0, dphi)
        weight = predicted_weight(density, bare_geometry, bare_geometry.bloch[j, k, 0])
        approx = weight_metric_approx(dphi, dphi, bare_geometry.metric[j, k, 0])
        assert abs(weight - approx) <= 5 * dphi**4

    def test_weights_of_both_bands_add_to_one(self, bare_geometry):
        density = gaussian_phase_density(128, (0.4, 2.2), 0.5)
        q = np.array([0.6, 0.0, 0.8])
        total = predicted_weight(density, bare_geometry, q, MINUS) + predicted_weight(density, bare_geometry, q, PLUS)
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_metric_approximation(self):
        assert weight_metric_approx(0.1, 0.1, 0.25 * np.eye(2)) == pytest.approx(0.995)
        with pytest.warns(SmallWidthWarning):
            weight_metric_approx(0.5 * math.pi, 0.1, 0.25 * np.eye(2))

    def test_grid_mismatch(self, bare_geometry):
        with pytest.raises(ValueError):
            predicted_weight(np.ones((8, 8)), bare_geometry, (0, 0, 1))

    def test_symmetric_width(self, bare_geometry):
        width = symmetric_width(bare_geometry, (0.0, 0.0))
        assert 0.33 * math.pi < width < 0.43 * math.pi
        density = gaussian_phase_density(128, (0.0, 0.0), width)
        assert average_bloch(density, bare_geometry, MINUS)[2] == pytest.approx(0.0, abs=1e-9)
        for theta in (0.0, 1.0, math.pi):
            q = (math.sin(theta), 0.0, math.cos(theta))
            # x and y averages vanish at the symmetric point Φ⁰ = 0
            assert predicted_weight(density, bare_geometry, q) == pytest.approx(0.5, abs=0.05)


class TestWeightMetricLaw:
    @pytest.mark.parametrize("dphi_over_pi", [0.02, 0.04, 0.06, 0.08, 0.1])
    def test_spin_up_at_the_origin(self, bare_geometry, dphi_over_pi):
        # H(0) = -Δ/2·σz, so |↑⟩ is the ground state and g₁₁ = g₂₂ = 1/4 there.
        dphi = dphi_over_pi * math.pi
        density = gaussian_phase_density(128, (0.0, 0.0), dphi)
        weight = predicted_weight(density, bare_geometry, (0.0, 0.0, 1.0))
        assert abs(weight - (1 - 2 * dphi**2 * 0.25)) <= 5 * dphi**4
