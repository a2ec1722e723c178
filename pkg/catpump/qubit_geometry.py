"""The parametrized two-level system: field h(Φ), eigenstates, first-order dressed states,
Berry curvature, quantum metric and Chern numbers on a torus grid."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from catpump import config
from catpump.exceptions import GaplessPoint, PerturbativeRegimeWarning

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

# Band labels and their slot in every (..., 2) band axis.
MINUS, PLUS = -1, +1


def band_slot(band: int) -> int:
    """Index of band ν ∈ {-1, +1} along a band axis."""
    if band not in (MINUS, PLUS):
        raise ValueError(f"band must be -1 or +1, got {band}")
    return 0 if band == MINUS else 1


def wrap_angle(value):
    """Reduce angles to [0, 2π)."""
    wrapped = np.mod(value, TWO_PI)
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


@dataclass(frozen=True)
class Phase2:
    """A point (φ₁, φ₂) on the phase torus, reduced modulo 2π."""
    phi1: float
    phi2: float

    def __post_init__(self):
        object.__setattr__(self, "phi1", float(wrap_angle(self.phi1)))
        object.__setattr__(self, "phi2", float(wrap_angle(self.phi2)))

    def as_array(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2])

    def shifted(self, omega, t: float) -> Phase2:
        """The point reached after time t along Φ - ωt."""
        return Phase2(self.phi1 - omega[0] * t, self.phi2 - omega[1] * t)


@dataclass(frozen=True)
class TwoLevelField:
    """A 2π-periodic map Φ ↦ h(Φ) ∈ ℝ³ with a gap scale Δ.

    Subclasses implement `components`. The Fourier decomposition defaults to an FFT
    over a 64-point grid per axis.
    """
    gap: float = 2.0

    def components(self, phi1, phi2) -> np.ndarray:
        raise NotImplementedError

    def derivatives(self, phi1, phi2, delta: float = config.POINT_FD_STEP) -> tuple[np.ndarray, np.ndarray]:
        """∂h/∂φ₁ and ∂h/∂φ₂ by central differences."""
        d1 = (self.components(phi1 + delta, phi2) - self.components(phi1 - delta, phi2)) / (2 * delta)
        d2 = (self.components(phi1, phi2 + delta) - self.components(phi1, phi2 - delta)) / (2 * delta)
        return d1, d2

    def fourier_coefficients(self, points: int = 64, cutoff: float = 1e-12) -> dict[tuple[int, int], np.ndarray]:
        """Coefficients c_m with h(Φ) = Σ_m c_m e^{i m·Φ}; entries below `cutoff` are dropped."""
        grid = TWO_PI * np.arange(points) / points
        p1, p2 = np.meshgrid(grid, grid, indexing="ij")
        values = self.components(p1, p2)
        spectrum = np.fft.fft2(values, axes=(0, 1)) / points**2
        coefficients = {}
        for k1 in range(points):
            for k2 in range(points):
                c = spectrum[k1, k2]
                if np.max(np.abs(c)) < cutoff:
                    continue
                m1 = k1 if k1 < points // 2 else k1 - points
                m2 = k2 if k2 < points // 2 else k2 - points
                coefficients[(m1, m2)] = c
        return coefficients


@dataclass(frozen=True)
class BHZField(TwoLevelField):
    """Half Bernevig-Hughes-Zhang field h = Δ/2 (sin φ₁, -sin φ₂, 1 - cos φ₁ - cos φ₂)."""

    def components(self, phi1, phi2) -> np.ndarray:
        phi1 = np.asarray(phi1, dtype=float)
        phi2 = np.asarray(phi2, dtype=float)
        half = self.gap / 2
        return np.stack([
            half * np.sin(phi1),
            -half * np.sin(phi2),
            half * (1 - np.cos(phi1) - np.cos(phi2)),
        ], axis=-1)

    def derivatives(self, phi1, phi2, delta: float = config.POINT_FD_STEP) -> tuple[np.ndarray, np.ndarray]:
        phi1 = np.asarray(phi1, dtype=float)
        phi2 = np.asarray(phi2, dtype=float)
        half = self.gap / 2
        zero = np.zeros(np.broadcast(phi1, phi2).shape)
        d1 = np.stack([half * np.cos(phi1) + zero, zero, half * np.sin(phi1) + zero], axis=-1)
        d2 = np.stack([zero, -half * np.cos(phi2) + zero, half * np.sin(phi2) + zero], axis=-1)
        return d1, d2

    def fourier_coefficients(self, points: int = 64, cutoff: float = 1e-12) -> dict[tuple[int, int], np.ndarray]:
        q = self.gap / 4
        return {
            (0, 0): np.array([0, 0, 2 * q], dtype=complex),
            (1, 0): np.array([-1j * q, 0, -q], dtype=complex),
            (-1, 0): np.array([1j * q, 0, -q], dtype=complex),
            (0, 1): np.array([0, 1j * q, -q], dtype=complex),
            (0, -1): np.array([0, -1j * q, -q], dtype=complex),
        }


@dataclass(frozen=True)
class FlatField(TwoLevelField):
    """Constant field (0, 0, Δ/2): trivial geometry."""

    def components(self, phi1, phi2) -> np.ndarray:
        shape = np.broadcast(np.asarray(phi1), np.asarray(phi2)).shape
        out = np.zeros(shape + (3,))
        out[..., 2] = self.gap / 2
        return out

    def fourier_coefficients(self, points: int = 64, cutoff: float = 1e-12) -> dict[tuple[int, int], np.ndarray]:
        return {(0, 0): np.array([0, 0, self.gap / 2], dtype=complex)}


@dataclass(frozen=True)
class CustomField(TwoLevelField):
    """User-supplied field; `function(phi1, phi2)` must broadcast and return (..., 3)."""
    function: Callable | None = None

    def components(self, phi1, phi2) -> np.ndarray:
        return np.asarray(self.function(np.asarray(phi1, dtype=float), np.asarray(phi2, dtype=float)), dtype=float)


FIELDS = {"bhz": BHZField, "flat": FlatField}


@dataclass(frozen=True)
class PointEigensystem:
    """Bare eigensystem of H(Φ) = h(Φ)·σ at one phase point."""
    e_minus: float
    e_plus: float
    b_minus: np.ndarray
    b_plus: np.ndarray
    states: np.ndarray  # (2 bands, 2 spin), row 0 is the ground state


@dataclass(frozen=True)
class DressedState:
    """Adiabatic qubit state of band ν at order 0 or 1."""
    band: int
    order: int
    phase: Phase2
    state: np.ndarray
    energy: float

    @property
    def bloch(self) -> np.ndarray:
        return bloch_vectors(self.state)


def field_at(model: TwoLevelField, phase: Phase2) -> np.ndarray:
    """Evaluate h(Φ) at one phase point."""
    return np.asarray(model.components(phase.phi1, phase.phi2), dtype=float)


def qubit_hamiltonian(h: np.ndarray) -> np.ndarray:
    """h·σ for a stack of field vectors (..., 3) -> (..., 2, 2)."""
    return np.einsum("...a,aij->...ij", h, PAULI)


def bloch_vectors(states: np.ndarray) -> np.ndarray:
    """Bloch vectors ⟨ψ|σ|ψ⟩ of spinors (..., 2) -> (..., 3)."""
    return np.einsum("...i,aij,...j->...a", states.conj(), PAULI, states).real


def fix_gauge(states: np.ndarray) -> np.ndarray:
    """Make the larger-magnitude spinor component real positive (component 0 on ties)."""
    magnitudes = np.abs(states)
    lead = np.where(magnitudes[..., 0] >= magnitudes[..., 1], 0, 1)
    pivot = np.take_along_axis(states, lead[..., None], axis=-1)[..., 0]
    return states * (np.conj(pivot) / np.abs(pivot))[..., None]


def _check_gapped(h: np.ndarray, gap: float) -> np.ndarray:
    norm = np.linalg.norm(h, axis=-1)
    if np.any(norm < config.GAPLESS_TOL * gap):
        raise GaplessPoint(f"|h| vanishes (min {norm.min():.3e}) on the evaluated phases")
    return norm


def bare_eigensystem(h: np.ndarray, gap: float) -> tuple[np.ndarray, np.ndarray]:
    """Energies (..., 2) and gauge-fixed states (..., 2 bands, 2 spin) of h·σ, ground band first."""
    _check_gapped(h, gap)
    energies, vectors = np.linalg.eigh(qubit_hamiltonian(h))
    states = fix_gauge(np.swapaxes(vectors, -1, -2))
    return energies, states


def _align_phases(states: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Parallel-transport each band state onto the phase of the reference state."""
    overlap = np.sum(reference.conj() * states, axis=-1)
    return states * (np.conj(overlap) / np.abs(overlap))[..., None]


def dressed_eigensystem(model: TwoLevelField, phi1, phi2, omega, order: int,
                        delta: float | tuple[float, float] = config.POINT_FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Dressed energies (..., 2) and states (..., 2, 2) at arrays of phases.

    Order 1 adds the cross-band term ħω·A⁰_{μν}/(E_ν⁰ - E_μ⁰) |ψ_μ⁰⟩ with
    A⁰_{μν,i} = i⟨ψ_μ⁰|∂ᵢψ_ν⁰⟩ from central differences, and renormalizes.
    """
    if order not in (0, 1):
        raise ValueError(f"order must be 0 or 1, got {order}")
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    omega = np.asarray(omega, dtype=float)
    h = model.components(phi1, phi2)
    energies, states = bare_eigensystem(h, model.gap)
    if order == 0 or not np.any(omega):
        return energies, states

    if np.linalg.norm(omega) > 0.25 * model.gap:
        warnings.warn(f"ħ|ω| = {np.linalg.norm(omega):.3g} is not small against Δ = {model.gap:.3g}",
                      PerturbativeRegimeWarning, stacklevel=2)

    steps = (delta, delta) if np.isscalar(delta) else delta
    drive = np.zeros(states.shape[:-2] + (2, 2), dtype=complex)
    for axis, (step, freq) in enumerate(zip(steps, omega)):
        shift = (step, 0.0) if axis == 0 else (0.0, step)
        _, forward = bare_eigensystem(model.components(phi1 + shift[0], phi2 + shift[1]), model.gap)
        _, backward = bare_eigensystem(model.components(phi1 - shift[0], phi2 - shift[1]), model.gap)
        derivative = (_align_phases(forward, states) - _align_phases(backward, states)) / (2 * step)
        connection = 1j * np.einsum("...ms,...ns->...mn", states.conj(), derivative)
        drive += freq * connection

    dressed = states.copy()
    for nu in (0, 1):
        mu = 1 - nu
        coefficient = drive[..., mu, nu] / (energies[..., nu] - energies[..., mu])
        dressed[..., nu, :] = states[..., nu, :] + coefficient[..., None] * states[..., mu, :]
    dressed /= np.linalg.norm(dressed, axis=-1, keepdims=True)

    hamiltonian = qubit_hamiltonian(h)
    dressed_energies = np.einsum("...ni,...ij,...nj->...n", dressed.conj(), hamiltonian, dressed).real
    return dressed_energies, dressed


def eigensystem_at(model: TwoLevelField, phase: Phase2) -> PointEigensystem:
    """Bare eigensystem at one phase point.

    Raises:
        GaplessPoint: if |h(Φ)| < 1e-12·Δ.
    """
    energies, states = bare_eigensystem(field_at(model, phase), model.gap)
    bloch = bloch_vectors(states)
    return PointEigensystem(
        e_minus=float(energies[0]),
        e_plus=float(energies[1]),
        b_minus=bloch[0],
        b_plus=bloch[1],
        states=states,
    )


def dressed_state(model: TwoLevelField, phase: Phase2, omega, order: int, band: int = MINUS) -> DressedState:
    """Adiabatic state of one band at one phase point.

    Args:
        model: The two-level field.
        phase: Phase point Φ.
        omega: Angular frequencies (ω₁, ω₂), ħ = 1.
        order: 0 for the eigenstate, 1 for the first-order dressed state.
        band: -1 for the ground band, +1 for the excited band.

    Returns:
        The dressed state with its energy ⟨ψ_ν|H(Φ)|ψ_ν⟩.
    """
    energies, states = dressed_eigensystem(model, phase.phi1, phase.phi2, omega, order)
    slot = band_slot(band)
    return DressedState(band=band, order=order, phase=phase, state=states[slot], energy=float(energies[slot]))


def metric_at(model: TwoLevelField, phase: Phase2, omega=(0.0, 0.0), order: int = 0, band: int = MINUS,
              delta: float = config.POINT_FD_STEP) -> np.ndarray:
    """Quantum metric g_ij = ¼ ∂ᵢb·∂ⱼb at one phase point from central Bloch-vector differences."""
    slot = band_slot(band)
    gradients = []
    for shift in ((delta, 0.0), (0.0, delta)):
        _, forward = dressed_eigensystem(model, phase.phi1 + shift[0], phase.phi2 + shift[1], omega, order)
        _, backward = dressed_eigensystem(model, phase.phi1 - shift[0], phase.phi2 - shift[1], omega, order)
        gradients.append((bloch_vectors(forward[slot]) - bloch_vectors(backward[slot])) / (2 * delta))
    gradients = np.array(gradients)
    return 0.25 * gradients @ gradients.T


def plaquette_fluxes(states: np.ndarray) -> np.ndarray:
    """Berry flux through each grid plaquette from gauge-invariant link products.

    `states` holds one spinor per grid point, shape (M1, M2, 2). The flux of plaquette
    (j, k) -> (j+1, k+1) is folded to (-π, π].
    """
    link1 = np.sum(states.conj() * np.roll(states, -1, axis=0), axis=-1)
    link2 = np.sum(states.conj() * np.roll(states, -1, axis=1), axis=-1)
    loop = link1 * np.roll(link2, -1, axis=0) * np.conj(np.roll(link1, -1, axis=1)) * np.conj(link2)
    flux = -np.angle(loop)
    return np.where(flux <= -np.pi, flux + TWO_PI, flux)


@dataclass(frozen=True)
class GeometryMap:
    """Energies, Bloch vectors, curvature and metric of both bands on an M1 × M2 torus grid.

    Array layouts (band axis ordered ground band first):
        energies (M1, M2, 2); states (M1, M2, 2, 2); bloch (M1, M2, 2, 3);
        fluxes (M1, M2, 2) per plaquette; curvature (M1, M2, 2) per grid point;
        metric (M1, M2, 2, 2, 2) as [..., band, i, j].
    """
    gap: float
    omega: np.ndarray
    order: int
    energies: np.ndarray
    states: np.ndarray
    bloch: np.ndarray
    fluxes: np.ndarray
    curvature: np.ndarray
    metric: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.energies.shape[:2]

    @property
    def phi1(self) -> np.ndarray:
        return TWO_PI * np.arange(self.shape[0]) / self.shape[0]

    @property
    def phi2(self) -> np.ndarray:
        return TWO_PI * np.arange(self.shape[1]) / self.shape[1]

    @property
    def cell(self) -> float:
        return TWO_PI**2 / (self.shape[0] * self.shape[1])

    def rows(self) -> list[list[float]]:
        """CSV rows φ1, φ2, E_minus, E_plus, F_minus, g11, g12, g22, row-major in φ₁ then φ₂."""
        rows = []
        for j, p1 in enumerate(self.phi1):
            for k, p2 in enumerate(self.phi2):
                g = self.metric[j, k, 0]
                rows.append([p1, p2, self.energies[j, k, 0], self.energies[j, k, 1],
                             self.curvature[j, k, 0], g[0, 0], g[0, 1], g[1, 1]])
        return rows


def geometry_map(model: TwoLevelField, omega, order: int, m1: int, m2: int) -> GeometryMap:
    """Sample both bands of the (dressed) adiabatic bundle on an m1 × m2 grid.

    Curvature comes from plaquette link phases, the metric from central differences of
    Bloch vectors, and energies from ⟨ψ_ν|H|ψ_ν⟩.

    Raises:
        GaplessPoint: if any grid point is gapless.
    """
    if m1 < 8 or m2 < 8:
        raise ValueError(f"grid must be at least 8 × 8, got {m1} × {m2}")
    omega = np.asarray(omega, dtype=float)
    step1, step2 = TWO_PI / m1, TWO_PI / m2
    p1, p2 = np.meshgrid(np.arange(m1) * step1, np.arange(m2) * step2, indexing="ij")
    energies, states = dressed_eigensystem(model, p1, p2, omega, order, delta=(step1, step2))
    bloch = bloch_vectors(states)

    fluxes = np.stack([plaquette_fluxes(states[:, :, slot]) for slot in (0, 1)], axis=-1)
    cell = step1 * step2
    curvature = 0.25 * (fluxes + np.roll(fluxes, 1, axis=0) + np.roll(fluxes, 1, axis=1)
                        + np.roll(fluxes, (1, 1), axis=(0, 1))) / cell

    d1 = (np.roll(bloch, -1, axis=0) - np.roll(bloch, 1, axis=0)) / (2 * step1)
    d2 = (np.roll(bloch, -1, axis=1) - np.roll(bloch, 1, axis=1)) / (2 * step2)
    gradient = np.stack([d1, d2], axis=-2)  # (M1, M2, 2 bands, 2 directions, 3)
    metric = 0.25 * np.einsum("...ia,...ja->...ij", gradient, gradient)

    logger.debug("Geometry map %d×%d (order %d) built", m1, m2, order)
    return GeometryMap(gap=model.gap, omega=omega, order=order, energies=energies, states=states,
                       bloch=bloch, fluxes=fluxes, curvature=curvature, metric=metric)


def chern_number(geometry: GeometryMap, band: int) -> int:
    """Chern number of a band as the sum of plaquette fluxes over 2π."""
    flux = geometry.fluxes[:, :, band_slot(band)]
    return int(round(math.fsum(flux.ravel()) / TWO_PI))


def transport_phase(model: TwoLevelField, omega, band: int, phase0: Phase2, t: float,
                    order: int = 1, max_step: float = 0.01) -> float:
    """Phase θ_ν(t; Φ₀) acquired by the adiabatic state along Φ₀ - ωt′.

    θ = -∫E_ν dt′ - Σᵢωᵢ∫A_ν,ᵢ dt′. The connection term is accumulated from overlaps of
    neighbouring states along the path, so it is consistent with the gauge of the
    endpoint states returned by `dressed_state`.

    Args:
        max_step: Largest phase increment |ω|Δt′ between path samples, in radians.
    """
    if t == 0:
        return 0.0
    omega = np.asarray(omega, dtype=float)
    steps = max(2, math.ceil(np.linalg.norm(omega) * abs(t) / max_step))
    steps += steps % 2
    times = np.linspace(0.0, t, steps + 1)
    energies, states = dressed_eigensystem(model, phase0.phi1 - omega[0] * times,
                                           phase0.phi2 - omega[1] * times, omega, order)
    slot = band_slot(band)
    dynamical = -integrate.simpson(energies[:, slot], x=times)
    path = states[:, slot]
    overlaps = np.sum(path[:-1].conj() * path[1:], axis=-1)
    return float(dynamical - np.sum(np.angle(overlaps)))
