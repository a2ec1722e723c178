"""Adiabatic projectors on the number lattice, band weights and the diagnostics of the cat split.

Projectors are kept in the eigenbasis of the zero-frequency Hamiltonian H(Φ̂): order 0 is the
spectral projector on one band, order 1 adds the cross-band block of ħω·N̂ divided by the
energy differences. In-gap edge states are never assigned to a band.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from catpump import config
from catpump.exceptions import DegenerateCut, EigensolverFailure, OutOfRange, SmallWidthWarning, ZeroState
from catpump.propagation import Propagator, evolve, number_distribution, observables
from catpump.qubit_geometry import MINUS, TWO_PI, GeometryMap, TwoLevelField, band_slot, geometry_map
from catpump.rotor_lattice import (NumberLattice, SparseHermitian, assemble_zero_frequency, number_operator,
                                   rotated_coordinates)
from catpump.states import TotalState

logger = logging.getLogger(__name__)

CUT_GRID = 128


def band_cuts(model: TwoLevelField, m: int = CUT_GRID) -> tuple[float, float]:
    """(max_Φ E₋⁰, min_Φ E₊⁰) on an m × m grid."""
    geometry = geometry_map(model, (0.0, 0.0), 0, m, m)
    return float(geometry.energies[..., 0].max()), float(geometry.energies[..., 1].min())


@dataclass(frozen=True, eq=False)
class ZeroFrequencySpectrum:
    """Eigenpairs of H(Φ̂) on a lattice, classified against the band cuts."""
    lattice: NumberLattice
    energies: np.ndarray
    vectors: np.ndarray
    cuts: tuple[float, float]

    @property
    def ground(self) -> np.ndarray:
        return self.energies < self.cuts[0]

    @property
    def excited(self) -> np.ndarray:
        return self.energies > self.cuts[1]

    @property
    def edge(self) -> np.ndarray:
        return ~(self.ground | self.excited)

    def band_mask(self, band: int) -> np.ndarray:
        return self.ground if band_slot(band) == 0 else self.excited

    def counts(self) -> dict[str, int]:
        return {"ground": int(self.ground.sum()), "excited": int(self.excited.sum()), "edge": int(self.edge.sum())}


def zero_frequency_spectrum(lattice: NumberLattice, model: TwoLevelField,
                            cuts: tuple[float, float] | None = None) -> ZeroFrequencySpectrum:
    """Diagonalize H(Φ̂) and split its eigenstates into ground band, excited band and edge set.

    Raises:
        DegenerateCut: if an eigenvalue lies within 1e-6·Δ of a cut.
        EigensolverFailure: if the eigensolver fails.
    """
    cuts = cuts if cuts is not None else band_cuts(model)
    operator = assemble_zero_frequency(lattice, model)
    start = time.perf_counter()
    try:
        energies, vectors = linalg.eigh(operator.toarray())
    except linalg.LinAlgError as error:
        raise EigensolverFailure(str(error)) from error
    logger.info("Zero-frequency spectrum of dimension %d in %.2f s", operator.dimension, time.perf_counter() - start)

    distance = np.min(np.abs(energies[:, None] - np.asarray(cuts)[None, :]))
    if distance < config.DEGENERATE_CUT_TOL * model.gap:
        raise DegenerateCut(f"an eigenvalue lies {distance:.3e} from a band cut {cuts}")
    spectrum = ZeroFrequencySpectrum(lattice, energies, vectors, cuts)
    logger.info("Band classification %s", spectrum.counts())
    return spectrum


@dataclass(frozen=True, eq=False)
class AdiabaticProjector:
    """P̂_ν at order 0 or 1.

    `coupling[k, l] = ⟨Ψ_k⁰|ħω·N̂|Ψ_l⁰⟩/(E_k⁰ - E_l⁰)` for k in band ν and l in the other band.
    """
    band: int
    order: int
    omega: np.ndarray
    spectrum: ZeroFrequencySpectrum
    coupling: np.ndarray | None = None

    def apply(self, vector: np.ndarray) -> np.ndarray:
        inside = self.spectrum.vectors[:, self.spectrum.band_mask(self.band)]
        inside_coefficients = inside.conj().T @ vector
        result = inside @ inside_coefficients
        if self.order == 1:
            outside = self.spectrum.vectors[:, self.spectrum.band_mask(-self.band)]
            result = result + inside @ (self.coupling @ (outside.conj().T @ vector))
            result = result + outside @ (self.coupling.conj().T @ inside_coefficients)
        return result


def build_projector(spectrum: ZeroFrequencySpectrum, omega, band: int, order: int) -> AdiabaticProjector:
    """Adiabatic projector of one band from the zero-frequency spectrum."""
    if order not in (0, 1):
        raise ValueError(f"projector order must be 0 or 1, got {order}")
    band_slot(band)
    omega = np.asarray(omega, dtype=float)
    if order == 0:
        return AdiabaticProjector(band, 0, omega, spectrum)

    inside_mask = spectrum.band_mask(band)
    outside_mask = spectrum.band_mask(-band)
    inside = spectrum.vectors[:, inside_mask]
    outside = spectrum.vectors[:, outside_mask]
    diagonal = number_operator(spectrum.lattice, omega)
    drive = inside.conj().T @ (diagonal[:, None] * outside)
    gaps = spectrum.energies[inside_mask][:, None] - spectrum.energies[outside_mask][None, :]
    logger.debug("Order-1 coupling block %s", drive.shape)
    return AdiabaticProjector(band, 1, omega, spectrum, drive / gaps)


def project(state: TotalState, projector: AdiabaticProjector) -> tuple[TotalState, float]:
    """P̂_ν|Ψ⟩ and its weight W_ν = ‖P̂_ν|Ψ⟩‖²."""
    if state.lattice.dimension != projector.spectrum.lattice.dimension:
        raise ValueError("state and projector live on different lattices")
    projected = state.with_vector(projector.apply(state.vector))
    return projected, projected.squared_norm()


@dataclass(frozen=True)
class ProjectorResiduals:
    idempotence: float
    commutator: float


def projector_residuals(projector: AdiabaticProjector, operator: SparseHermitian,
                        sample: TotalState) -> ProjectorResiduals:
    """‖(P² - P)ψ‖ and ‖[Ĥ, P]ψ‖ relative to ‖ψ‖ on a sample state."""
    norm = sample.norm()
    if norm == 0:
        raise ZeroState("residuals need a nonzero sample")
    psi = sample.vector
    once = projector.apply(psi)
    idempotence = np.linalg.norm(projector.apply(once) - once) / norm
    commutator = np.linalg.norm(operator.matrix @ once - projector.apply(operator.matrix @ psi)) / norm
    return ProjectorResiduals(float(idempotence), float(commutator))


def weight_conservation_drift(state: TotalState, projector: AdiabaticProjector, propagator: Propagator,
                              times) -> float:
    """Largest change of W_ν along the exact evolution, times in units of T₁."""
    _, initial = project(state, projector)
    drift = 0.0
    for evolved in evolve(propagator, state, times, abort=False):
        drift = max(drift, abs(project(evolved, projector)[1] - initial))
    return drift


def halfspace_split(state: TotalState, omega, n_perp_ref: float) -> tuple[TotalState, TotalState, float]:
    """Split amplitudes by the site predicate n_perp < n_perp_ref; returns (Ψ_<, Ψ_>, W_<)."""
    _, n_perp = rotated_coordinates(state.lattice.sites, omega)
    lower = np.repeat(n_perp < n_perp_ref, 2)
    below = state.with_vector(np.where(lower, state.vector, 0))
    above = state.with_vector(np.where(lower, 0, state.vector))
    return below, above, below.squared_norm()


def fidelity(first: TotalState, second: TotalState) -> float:
    """|⟨Ψ₁|Ψ₂⟩|² / (⟨Ψ₁|Ψ₁⟩⟨Ψ₂|Ψ₂⟩).

    Raises:
        ZeroState: if either state vanishes.
    """
    norms = first.squared_norm() * second.squared_norm()
    if norms == 0:
        raise ZeroState("fidelity with a zero state")
    return float(min(abs(np.vdot(first.vector, second.vector)) ** 2 / norms, 1.0))


def gaussian_phase_density(m: int, phase0, dphi, images: int = 4) -> np.ndarray:
    """Wrapped Gaussian |χ|² of widths Δφ on an m × m grid, normalized to ∫ = 1."""
    phase0 = np.broadcast_to(np.asarray(phase0, dtype=float), (2,))
    widths = np.broadcast_to(np.asarray(dphi, dtype=float), (2,))
    if np.any(widths <= 0):
        raise OutOfRange(f"phase widths must be positive, got {dphi}")
    grid = TWO_PI * np.arange(m) / m
    shifts = TWO_PI * np.arange(-images, images + 1)
    profiles = []
    for centre, width in zip(phase0, widths):
        distance = grid[:, None] - centre + shifts[None, :]
        profile = np.exp(-distance**2 / (2 * width**2)).sum(axis=1)
        if profile.sum() == 0:
            profile = np.zeros(m)
            profile[int(round(centre / (TWO_PI / m))) % m] = 1.0
        profiles.append(profile)
    density = np.outer(*profiles)
    return density / (density.sum() * (TWO_PI / m) ** 2)


def average_bloch(density: np.ndarray, geometry: GeometryMap, band: int) -> np.ndarray:
    """b̄_ν = ∫|χ|² b_ν dΦ for a density normalized on the grid."""
    weights = density / density.sum()
    return np.einsum("jk,jka->a", weights, geometry.bloch[:, :, band_slot(band)])


def predicted_weight(density: np.ndarray, geometry: GeometryMap, polarization, band: int = MINUS) -> float:
    """W_ν = (1 + b̄_ν·Q)/2."""
    if density.shape != geometry.shape:
        raise ValueError("density and geometry map use different grids")
    return float((1 + average_bloch(density, geometry, band) @ np.asarray(polarization, dtype=float)) / 2)


def weight_metric_approx(dphi1: float, dphi2: float, metric: np.ndarray) -> float:
    """W ≈ 1 - Δφ₁²g₁₁(Φ⁰) - Δφ₂²g₂₂(Φ⁰)."""
    if max(dphi1, dphi2) > config.SMALL_WIDTH_LIMIT:
        message = f"Δφ = {max(dphi1, dphi2):.3f} is outside the small-width expansion"
        logger.warning(message)
        warnings.warn(message, SmallWidthWarning, stacklevel=2)
    return float(1 - dphi1**2 * metric[0, 0] - dphi2**2 * metric[1, 1])


def symmetric_width(geometry: GeometryMap, phase0, band: int = MINUS) -> float:
    """Phase width at which the z component of b̄_ν changes sign, where W₋ = W₊ = 1/2 for any qubit state.

    Raises:
        OutOfRange: if b̄_z keeps its sign over [1e-3, π].
    """
    m = geometry.shape[0]

    def bloch_z(width):
        return average_bloch(gaussian_phase_density(m, phase0, width), geometry, band)[2]

    low, high = 1e-3, math.pi
    if bloch_z(low) * bloch_z(high) > 0:
        raise OutOfRange("the averaged Bloch vector does not change sign over the width range")
    return float(optimize.brentq(bloch_z, low, high, xtol=1e-10))


def bhattacharyya(first: TotalState, second: TotalState, omega) -> float:
    """Overlap Σ√(pq) of the normalized unit-binned n_perp marginals of two states."""
    centres_p, p = number_distribution(first).rotated_marginal(omega)
    centres_q, q = number_distribution(second).rotated_marginal(omega)
    if p.sum() == 0 or q.sum() == 0:
        raise ZeroState("overlap of a zero marginal")
    p_by_bin = dict(zip(centres_p, p / p.sum()))
    return float(sum(math.sqrt(p_by_bin[c] * w) for c, w in zip(centres_q, q / q.sum()) if c in p_by_bin))


def separation_time(minus: list[TotalState], plus: list[TotalState], omega,
                    times) -> tuple[float, bool]:
    """First time the two components' n_perp marginals overlap below the threshold.

    Returns the fallback time (not detected) when they never do.
    """
    for t, a, b in zip(times, minus, plus):
        if bhattacharyya(a, b, omega) < config.SEPARATION_OVERLAP:
            return float(t), True
    logger.info("No separation detected, using t_sep = %g T1", config.FALLBACK_T_SEP)
    return config.FALLBACK_T_SEP, False


@dataclass(frozen=True)
class ComponentDrift:
    weight: float
    slope: float
    residual: float


@dataclass(frozen=True)
class CatSplitReport:
    """Separation time (T₁), weights and drift of both adiabatic components; slopes in quanta per T₁."""
    t_sep: float
    t_sep_detected: bool
    minus: ComponentDrift
    plus: ComponentDrift
    edge_weight: float
    slope_theory: float

    def as_dict(self) -> dict:
        return {
            "t_sep_over_T1": self.t_sep,
            "t_sep_detected": self.t_sep_detected,
            "W_minus": self.minus.weight,
            "W_plus": self.plus.weight,
            "W_edge": self.edge_weight,
            "slope_minus": self.minus.slope,
            "slope_plus": self.plus.slope,
            "slope_theory": self.slope_theory,
            "dnperp_minus": self.minus.residual,
            "dnperp_plus": self.plus.residual,
        }


def _drift(times: np.ndarray, component: list[TotalState], omega, window) -> tuple[float, float]:
    means = np.array([observables(state, omega).nperp_mean for state in component])
    inside = (times >= window[0]) & (times <= window[1])
    if inside.sum() < 2:
        raise OutOfRange(f"fit window {window} holds fewer than two sampled times")
    slope, intercept = np.polyfit(times[inside], means[inside], 1)
    residual = float(np.max(np.abs(means[inside] - (slope * times[inside] + intercept))))
    return float(slope), residual


def cat_split_report(states: list[TotalState], times, minus: AdiabaticProjector, plus: AdiabaticProjector,
                     chern_minus: int, period: float, window=(2.0, 10.0)) -> CatSplitReport:
    """Weights at t = 0, drift slopes over the fit window and the separation time of the two components.

    Args:
        states: Evolved states at `times` (units of T₁), the first at t = 0.
        minus: Projector on the ground band.
        plus: Projector on the excited band, same order as `minus`.
        chern_minus: Chern number of the ground band.
        period: T₁ in internal time units.
        window: Time range of the linear fits, in units of T₁.
    """
    times = np.asarray(times, dtype=float)
    omega = minus.omega
    minus_parts = [project(state, minus)[0] for state in states]
    plus_parts = [project(state, plus)[0] for state in states]
    w_minus = minus_parts[0].squared_norm() / states[0].squared_norm()
    w_plus = plus_parts[0].squared_norm() / states[0].squared_norm()
    slope_minus, residual_minus = _drift(times, minus_parts, omega, window)
    slope_plus, residual_plus = _drift(times, plus_parts, omega, window)
    t_sep, detected = separation_time(minus_parts, plus_parts, omega, times)
    theory = -np.linalg.norm(omega) * chern_minus * period / TWO_PI
    logger.info("Cat split: W- = %.6f, slopes %.4f / %.4f (theory %.4f), t_sep = %g",
                w_minus, slope_minus, slope_plus, theory, t_sep)
    return CatSplitReport(
        t_sep=t_sep,
        t_sep_detected=detected,
        minus=ComponentDrift(w_minus, slope_minus, residual_minus),
        plus=ComponentDrift(w_plus, slope_plus, residual_plus),
        edge_weight=max(0.0, 1.0 - w_minus - w_plus),
        slope_theory=float(theory),
    )
