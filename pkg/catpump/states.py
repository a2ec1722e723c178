"""Initial states of the two rotor modes and the qubit, and the transform between
number amplitudes and phase-space wave amplitudes χ(Φ).

The phase basis is ⟨Φ|N⟩ = e^{-iN·Φ}/(2π), the convention in which e^{iφ̂}|n⟩ = |n-1⟩
acts as multiplication by e^{iφ} and h(Φ̂) acts as h(Φ)·σ on χ(Φ).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from catpump import config
from catpump.exceptions import OutOfRange, TruncationLoss, WidthTooSmall
from catpump.qubit_geometry import TWO_PI, GeometryMap, band_slot, bloch_vectors
from catpump.rotor_lattice import NumberLattice

logger = logging.getLogger(__name__)

QUASI_FOCK_WIDTH = 1 / TWO_PI
COLLAPSE_TOL = 1e-12


@dataclass(frozen=True)
class ModeWavefunction:
    """Number amplitudes of one rotor mode on a contiguous range of n."""
    n_values: np.ndarray
    amplitudes: np.ndarray
    n0: int
    dn: float
    phi0: float
    mass_loss: float = 0.0

    def amplitude_of(self, n) -> np.ndarray:
        """Amplitudes at arbitrary n, zero outside the support."""
        n = np.asarray(n)
        index = n - self.n_values[0]
        inside = (index >= 0) & (index < len(self.n_values))
        out = np.zeros(n.shape, dtype=complex)
        out[inside] = self.amplitudes[index[inside]]
        return out

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def number_mean(self) -> float:
        return float(np.sum(self.n_values * self.probabilities))

    def number_std(self) -> float:
        mean = self.number_mean()
        return float(np.sqrt(np.sum((self.n_values - mean) ** 2 * self.probabilities)))

    def phase_mean_resultant(self) -> complex:
        """⟨e^{iφ̂}⟩ = Σ_n c*_{n-1} c_n."""
        return complex(np.sum(self.amplitudes[:-1].conj() * self.amplitudes[1:]))

    def phase_std(self) -> float:
        """Circular standard deviation √(-2 ln|⟨e^{iφ}⟩|); infinite for a Fock state."""
        resultant = abs(self.phase_mean_resultant())
        if resultant == 0:
            return math.inf
        return math.sqrt(-2 * math.log(min(resultant, 1.0)))


def gaussian_mode(n0: int, dn: float, phi0: float = 0.0, support: tuple[int, int] | None = None) -> ModeWavefunction:
    """Gaussian mode c_n ∝ exp(-(n-n⁰)²/(4Δn²)) e^{inφ⁰}, localized at φ⁰ in phase.

    Args:
        n0: Mean number of quanta.
        dn: Number width Δn; the phase width is 1/(2Δn). Zero gives a Fock state.
        phi0: Centre phase.
        support: Inclusive range of n to keep. Defaults to n⁰ ± (8Δn + 2).

    Raises:
        OutOfRange: for a negative width.
        WidthTooSmall: if the support collapses the distribution to one site although Δn > 0.35.
        TruncationLoss: if the support drops 1e-8 or more of the probability.
    """
    if dn < 0:
        raise OutOfRange(f"number width must be positive, got {dn}")
    if dn == 0:
        return fock_mode(n0, support)

    reach = math.ceil(8 * dn + 2)
    low, high = support if support is not None else (n0 - reach, n0 + reach)
    if low > high:
        raise OutOfRange(f"empty support {support}")
    reference_reach = max(40, math.ceil(12 * dn) + 2)
    reference = np.arange(min(low, n0 - reference_reach), max(high, n0 + reference_reach) + 1)
    reference_mass = np.sum(np.exp(-((reference - n0) ** 2) / (2 * dn**2)))

    n_values = np.arange(low, high + 1)
    amplitudes = np.exp(-((n_values - n0) ** 2) / (4 * dn**2)) * np.exp(1j * n_values * phi0)
    probabilities = np.abs(amplitudes) ** 2
    kept = np.sum(probabilities)
    if kept > 0 and dn > 0.35 and np.max(probabilities) >= (1 - COLLAPSE_TOL) * kept:
        raise WidthTooSmall(f"Δn = {dn} collapsed onto a single site of the support {low}..{high}")
    mass_loss = max(0.0, 1.0 - kept / reference_mass)
    if kept == 0 or mass_loss >= config.MODE_MASS_LOSS:
        raise TruncationLoss(f"support {low}..{high} loses {mass_loss:.3e} of a Δn={dn} mode")
    amplitudes = amplitudes / math.sqrt(kept)
    return ModeWavefunction(n_values, amplitudes, n0, dn, float(phi0), mass_loss)


def fock_mode(n0: int, bounds: tuple[int, int] | None = None) -> ModeWavefunction:
    """Number eigenstate |n⁰⟩.

    Raises:
        OutOfRange: if n⁰ lies outside `bounds`.
    """
    if bounds is not None and not bounds[0] <= n0 <= bounds[1]:
        raise OutOfRange(f"n0 = {n0} outside {bounds}")
    return ModeWavefunction(np.array([n0]), np.array([1.0 + 0j]), n0, 0.0, 0.0)


def quasi_fock_mode(n0: int, phi0: float = 0.0) -> ModeWavefunction:
    """Gaussian with Δn = 1/(2π): delocalized over the whole phase circle."""
    return gaussian_mode(n0, QUASI_FOCK_WIDTH, phi0)


@dataclass(frozen=True)
class QubitState:
    amplitudes: np.ndarray

    @property
    def bloch(self) -> np.ndarray:
        return bloch_vectors(self.amplitudes)

    @property
    def purity(self) -> float:
        return float((1 + np.dot(self.bloch, self.bloch)) / 2)


def qubit_state(theta: float, phi: float = 0.0) -> QubitState:
    """Pure qubit state with Bloch vector (sinθ cosφ, sinθ sinφ, cosθ); θ = 0 is |↑⟩."""
    return QubitState(np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)], dtype=complex))


@dataclass(eq=False)
class TotalState:
    """Amplitude vector on |site⟩ ⊗ {↑, ↓}, spin index fastest."""
    lattice: NumberLattice
    vector: np.ndarray
    mass_loss: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=complex)
        if self.vector.shape != (self.lattice.dimension,):
            raise ValueError(f"vector of shape {self.vector.shape} does not fit dimension {self.lattice.dimension}")

    @property
    def spinors(self) -> np.ndarray:
        """Amplitudes reshaped to (sites, 2)."""
        return self.vector.reshape(self.lattice.size, 2)

    def squared_norm(self) -> float:
        return float(np.vdot(self.vector, self.vector).real)

    def norm(self) -> float:
        return math.sqrt(self.squared_norm())

    def with_vector(self, vector: np.ndarray) -> TotalState:
        return TotalState(self.lattice, vector, self.mass_loss, dict(self.meta))

    def snapshot_rows(self) -> list[list]:
        """CSV rows n1, n2, re_up, im_up, re_dn, im_dn."""
        spinors = self.spinors
        return [[int(n[0]), int(n[1]), a[0].real, a[0].imag, a[1].real, a[1].imag]
                for n, a in zip(self.lattice.sites, spinors)]


SNAPSHOT_COLUMNS = ["n1", "n2", "re_up", "im_up", "re_dn", "im_dn"]


def separable_state(mode1: ModeWavefunction, mode2: ModeWavefunction, qubit: QubitState,
                    lattice: NumberLattice) -> TotalState:
    """Product state |χ₁⟩⊗|χ₂⟩⊗|ψ_q⟩ restricted to the retained sites and renormalized.

    Raises:
        TruncationLoss: if the lattice drops 1e-6 or more of the probability.
    """
    sites = lattice.sites
    site_amplitudes = mode1.amplitude_of(sites[:, 0]) * mode2.amplitude_of(sites[:, 1])
    vector = (site_amplitudes[:, None] * qubit.amplitudes[None, :]).ravel()
    mass = float(np.vdot(vector, vector).real)
    mass_loss = 1.0 - mass
    if mass == 0 or mass_loss >= config.LATTICE_MASS_LOSS:
        raise TruncationLoss(f"lattice keeps only {mass:.8f} of the prepared state")
    logger.debug("Separable state placed with mass loss %.3e", mass_loss)
    return TotalState(lattice, vector / math.sqrt(mass), mass_loss)


@dataclass(frozen=True)
class PhaseAmplitudeMap:
    """χ(Φ) on an M × M grid over [0, 2π)².

    `values` has shape (2, M, M) for the spin-resolved amplitudes χ_s, or (M, M) for a
    band-resolved amplitude χ_ν, in which case `band` is set.
    """
    values: np.ndarray
    band: int | None = None
    order: int | None = None

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    @property
    def cell(self) -> float:
        return (TWO_PI / self.m) ** 2

    @property
    def phi(self) -> np.ndarray:
        return TWO_PI * np.arange(self.m) / self.m

    def density(self) -> np.ndarray:
        squared = np.abs(self.values) ** 2
        return squared if self.band is not None else squared.sum(axis=0)

    def total_weight(self) -> float:
        return float(self.density().sum() * self.cell)

    def rows(self) -> list[list[float]]:
        """CSV rows phi1, phi2, re, im for a band map, phi1, phi2, density otherwise."""
        rows = []
        density = self.density()
        for j, p1 in enumerate(self.phi):
            for k, p2 in enumerate(self.phi):
                if self.band is None:
                    rows.append([p1, p2, density[j, k]])
                else:
                    value = self.values[j, k]
                    rows.append([p1, p2, value.real, value.imag])
        return rows


def _check_grid(lattice: NumberLattice, m: int) -> None:
    extent = lattice.sites.max(axis=0) - lattice.sites.min(axis=0) + 1
    if np.any(extent > m):
        raise ValueError(f"phase grid {m} is smaller than the lattice extent {tuple(extent)}")


def phase_amplitude(state: TotalState, m: int, band: int | None = None,
                    geometry: GeometryMap | None = None) -> PhaseAmplitudeMap:
    """Wave amplitudes χ_s(Φ) = Σ_N ⟨Φ|N⟩ amp(N, s), optionally resolved on band ν.

    Args:
        state: The state to transform.
        m: Grid points per phase axis; must cover the lattice extent.
        band: Band ν ∈ {-1, +1}; None returns the spin-resolved amplitudes.
        geometry: Map on the same m × m grid supplying ψ_ν(Φ) (its order and ω fix the dressing).
    """
    lattice = state.lattice
    _check_grid(lattice, m)
    grid = np.zeros((2, m, m), dtype=complex)
    k1 = np.mod(lattice.sites[:, 0], m)
    k2 = np.mod(lattice.sites[:, 1], m)
    spinors = state.spinors
    grid[0, k1, k2] = spinors[:, 0]
    grid[1, k1, k2] = spinors[:, 1]
    chi = np.fft.fft2(grid, axes=(1, 2)) / TWO_PI
    if band is None:
        return PhaseAmplitudeMap(chi)

    if geometry is None or geometry.shape != (m, m):
        raise ValueError("band resolution needs a geometry map on the same grid")
    psi = geometry.states[:, :, band_slot(band)]
    chi_band = np.einsum("jks,sjk->jk", psi.conj(), chi)
    return PhaseAmplitudeMap(chi_band, band=band, order=geometry.order)


def number_amplitudes(phase_map: PhaseAmplitudeMap, lattice: NumberLattice) -> TotalState:
    """Inverse of `phase_amplitude` for spin-resolved maps, read back on the lattice sites."""
    if phase_map.band is not None:
        raise ValueError("only spin-resolved maps can be transformed back")
    _check_grid(lattice, phase_map.m)
    grid = np.fft.ifft2(phase_map.values * TWO_PI, axes=(1, 2))
    k1 = np.mod(lattice.sites[:, 0], phase_map.m)
    k2 = np.mod(lattice.sites[:, 1], phase_map.m)
    spinors = np.stack([grid[0, k1, k2], grid[1, k1, k2]], axis=-1)
    return TotalState(lattice, spinors.ravel())


def band_spinor_field(phase_map: PhaseAmplitudeMap, geometry: GeometryMap) -> np.ndarray:
    """Gauge-invariant projected spinor Ψ_s(Φ) = χ_ν(Φ) ψ_ν,s(Φ), shape (2, M, M)."""
    psi = geometry.states[:, :, band_slot(phase_map.band)]
    return np.moveaxis(phase_map.values[..., None] * psi, -1, 0)
