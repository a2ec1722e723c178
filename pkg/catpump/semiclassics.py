"""Hybrid classical-quantum predictions built from a GeometryMap.

Each phase point Φ⁰ carries a classical trajectory of the number of quanta along
Φ(t) = Φ⁰ - ωt, driven by the energy gradient and the Berry curvature. Averages over a
phase density then predict the moments of the quantum run without diagonalizing anything.
Times are given in units of T₁ = 2π/ω₁; internally ħ = 1.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate

from catpump import config
from catpump.exceptions import GaplessPoint, SmallWidthWarning, ZeroState
from catpump.qubit_geometry import TWO_PI, GeometryMap, Phase2, band_slot, chern_number
from catpump.rotor_lattice import rotated_coordinates
from catpump.states import PhaseAmplitudeMap, band_spinor_field

logger = logging.getLogger(__name__)

SPLINE_PADDING = 16
CONTINUED_FRACTION_TOL = 1e-12


class PeriodicInterpolator:
    """Bicubic interpolating spline of a field sampled on a periodic grid over [0, 2π)².

    The grid is padded by periodic copies so the spline is periodic to well below the
    quadrature tolerance; derivatives are those of the spline itself.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        m1, m2 = values.shape
        pad = SPLINE_PADDING
        axis1 = TWO_PI * np.arange(-pad, m1 + pad) / m1
        axis2 = TWO_PI * np.arange(-pad, m2 + pad) / m2
        self._spline = interpolate.RectBivariateSpline(axis1, axis2, np.pad(values, pad, mode="wrap"), kx=3, ky=3)

    def __call__(self, phi1, phi2, d1: int = 0, d2: int = 0) -> np.ndarray:
        phi1, phi2 = np.broadcast_arrays(np.mod(phi1, TWO_PI), np.mod(phi2, TWO_PI))
        return self._spline.ev(phi1.ravel(), phi2.ravel(), dx=d1, dy=d2).reshape(phi1.shape)


@dataclass(frozen=True, eq=False)
class BandFields:
    """Interpolated energy, curvature, metric and Bloch vector of one band."""
    band: int
    omega: np.ndarray
    energy: PeriodicInterpolator
    curvature: PeriodicInterpolator
    metric: tuple[PeriodicInterpolator, PeriodicInterpolator, PeriodicInterpolator]
    bloch: tuple[PeriodicInterpolator, PeriodicInterpolator, PeriodicInterpolator]

    def rates(self, phi1, phi2, omega) -> np.ndarray:
        """dn₁/dt = ∂₁E + ω₂F and dn₂/dt = ∂₂E - ω₁F, stacked on the last axis."""
        curvature = self.curvature(phi1, phi2)
        return np.stack([self.energy(phi1, phi2, d1=1) + omega[1] * curvature,
                         self.energy(phi1, phi2, d2=1) - omega[0] * curvature], axis=-1)


def band_fields(geometry: GeometryMap, band: int) -> BandFields:
    """Interpolators of one band of a geometry map.

    Raises:
        GaplessPoint: if the bands touch on the grid.
    """
    gap = geometry.energies[..., 1] - geometry.energies[..., 0]
    if np.min(gap) < config.GAPLESS_TOL * geometry.gap:
        raise GaplessPoint("the geometry map has a gapless grid point")
    slot = band_slot(band)
    metric = geometry.metric[:, :, slot]
    return BandFields(
        band=band,
        omega=np.asarray(geometry.omega, dtype=float),
        energy=PeriodicInterpolator(geometry.energies[:, :, slot]),
        curvature=PeriodicInterpolator(geometry.curvature[:, :, slot]),
        metric=(PeriodicInterpolator(metric[..., 0, 0]), PeriodicInterpolator(metric[..., 0, 1]),
                PeriodicInterpolator(metric[..., 1, 1])),
        bloch=tuple(PeriodicInterpolator(geometry.bloch[:, :, slot, a]) for a in range(3)),
    )


def _frequencies(geometry: GeometryMap, omega=None) -> np.ndarray:
    omega = np.asarray(geometry.omega if omega is None else omega, dtype=float)
    if omega[0] <= 0:
        raise ValueError("trajectories need a positive ω₁")
    return omega


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    return times


def _displacements(fields: BandFields, omega: np.ndarray, phase0: np.ndarray, times: np.ndarray,
                   step: float = config.SIMPSON_STEP) -> np.ndarray:
    """n(t, Φ⁰) for phases (P, 2) at times in units of T₁; shape (T, P, 2).

    Composite Simpson between consecutive requested times with steps ≤ `step`·T₁.
    """
    period = TWO_PI / omega[0]
    out = np.zeros((len(times), len(phase0), 2))
    accumulated = np.zeros((len(phase0), 2))
    previous = 0.0
    for index, tau in enumerate(times):
        if tau > previous:
            count = max(2, math.ceil((tau - previous) / step))
            count += count % 2
            grid = np.linspace(previous, tau, count + 1) * period
            phi1 = phase0[None, :, 0] - omega[0] * grid[:, None]
            phi2 = phase0[None, :, 1] - omega[1] * grid[:, None]
            accumulated = accumulated + integrate.simpson(fields.rates(phi1, phi2, omega), x=grid, axis=0)
            previous = tau
        out[index] = accumulated
    return out


@dataclass(frozen=True)
class ClassicalTrajectory:
    band: int
    phase0: Phase2
    times: np.ndarray
    n: np.ndarray
    n_e: np.ndarray
    n_perp: np.ndarray

    def rows(self) -> list[list[float]]:
        """CSV rows t_over_T1, n1, n2, nE, nperp."""
        return [[t, n[0], n[1], e, p] for t, n, e, p in zip(self.times, self.n, self.n_e, self.n_perp)]


TRAJECTORY_COLUMNS = ["t_over_T1", "n1", "n2", "nE", "nperp"]


def classical_trajectory(geometry: GeometryMap, band: int, phase0: Phase2, times, omega=None,
                         step: float = config.SIMPSON_STEP) -> ClassicalTrajectory:
    """Quanta transferred along Φ⁰ - ωt by the energy gradient and the curvature of one band.

    Args:
        geometry: Map supplying E_ν and F_ν; its ω is used unless `omega` is given.
        band: -1 or +1.
        phase0: Initial phase Φ⁰.
        times: Nondecreasing times in units of T₁.
        omega: Optional frequency vector overriding the map's.
        step: Largest Simpson step in units of T₁.
    """
    omega = _frequencies(geometry, omega)
    times = _check_times(times)
    fields = band_fields(geometry, band)
    n = _displacements(fields, omega, phase0.as_array()[None, :], times, step)[:, 0]
    n_e, n_perp = rotated_coordinates(n, omega)
    return ClassicalTrajectory(band, phase0, times, n, n_e, n_perp)


@dataclass(frozen=True)
class MomentPrediction:
    """Phase-averaged displacement and variance of n₁, n₂, n_E and n_perp; columns in that order."""
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    def rows(self) -> list[list[float]]:
        return [[t, *m, *v] for t, m, v in zip(self.times, self.mean, self.variance)]


MOMENT_COLUMNS = ["t_over_T1", "n1_shift", "n2_shift", "nE_shift", "nperp_shift",
                  "var_n1", "var_n2", "var_nE", "var_nperp"]


def _grid_phases(geometry: GeometryMap) -> np.ndarray:
    p1, p2 = np.meshgrid(geometry.phi1, geometry.phi2, indexing="ij")
    return np.stack([p1.ravel(), p2.ravel()], axis=-1)


def _grid_displacements(geometry: GeometryMap, band: int, times, omega) -> tuple[np.ndarray, np.ndarray]:
    """Displacements of every grid point, extended by the rotated components: (T, M1·M2, 4)."""
    fields = band_fields(geometry, band)
    n = _displacements(fields, omega, _grid_phases(geometry), times)
    n_e, n_perp = rotated_coordinates(n, omega)
    return np.concatenate([n, n_e[..., None], n_perp[..., None]], axis=-1), fields


def _normalized(density: np.ndarray) -> np.ndarray:
    total = density.sum()
    if total == 0:
        raise ZeroState("phase density vanishes")
    return (density / total).ravel()


def phase_averaged_moments(geometry: GeometryMap, band: int, density: np.ndarray, times,
                           omega=None) -> MomentPrediction:
    """Mean and variance of n_i(t, Φ) under the phase density |χ_ν|² by grid quadrature.

    The mean is the shift of ⟨n̂_i⟩ of the band component since t = 0.
    """
    omega = _frequencies(geometry, omega)
    times = _check_times(times)
    weights = _normalized(np.asarray(density, dtype=float))
    displacement, _ = _grid_displacements(geometry, band, times, omega)
    mean = np.einsum("p,tpc->tc", weights, displacement)
    variance = np.einsum("p,tpc->tc", weights, displacement**2) - mean**2
    return MomentPrediction(times, mean, np.maximum(variance, 0.0))


def _spectral_derivative(values: np.ndarray, axis: int) -> np.ndarray:
    m = values.shape[axis]
    k = np.fft.fftfreq(m, d=1.0 / m)
    if m % 2 == 0:
        k[m // 2] = 0
    shape = [1] * values.ndim
    shape[axis] = m
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=axis), axis=axis)


@dataclass(frozen=True)
class SpreadingPrediction:
    """Predicted number spreads along ω (E) and across it (perp), with their separate terms."""
    times: np.ndarray
    initial: np.ndarray
    variance_term: np.ndarray
    metric_term: np.ndarray
    correlation_term: np.ndarray

    @property
    def spread(self) -> np.ndarray:
        total = self.initial[None, :] ** 2 + self.variance_term + self.metric_term + self.correlation_term
        return np.sqrt(np.maximum(total, 0.0))

    def rows(self) -> list[list[float]]:
        return [[t, *s, *v, *g, *c] for t, s, v, g, c in
                zip(self.times, self.spread, self.variance_term, self.metric_term, self.correlation_term)]


SPREADING_COLUMNS = ["t_over_T1", "dnE", "dnperp", "var_E", "var_perp", "metric_E", "metric_perp",
                     "corr_E", "corr_perp"]


def spreading_prediction(geometry: GeometryMap, band: int, amplitude: PhaseAmplitudeMap, times,
                         omega=None) -> SpreadingPrediction:
    """Δn_E(t) and Δn_perp(t) of a band component from its wave amplitude χ_ν(Φ).

    [Δn_i(t)]² = [Δn_i(0)]² + Var[n_i(t, Φ)] + ∫|χ_ν|²(g_ii(Φ - ωt) - g_ii(Φ))/W + δC_i(t), where
    δC_i is the correlation of the current density J_ν,i with n_i(t, Φ). Derivatives are spectral
    and act on the gauge-invariant spinor Ψ_s = χ_ν ψ_ν,s.
    """
    if amplitude.band != band or amplitude.values.shape != geometry.shape:
        raise ValueError("the amplitude map must resolve the same band on the geometry grid")
    omega = _frequencies(geometry, omega)
    times = _check_times(times)
    norm = np.linalg.norm(omega)
    directions = np.array([[omega[0], omega[1]], [-omega[1], omega[0]]]) / norm  # rows: E, perp

    density = np.abs(amplitude.values) ** 2
    weight = density.sum()
    if weight == 0:
        raise ZeroState("band component vanishes")
    spinor = band_spinor_field(amplitude, geometry)
    gradient = np.stack([_spectral_derivative(spinor, 1), _spectral_derivative(spinor, 2)])  # (axis, s, M, M)
    rotated_gradient = np.einsum("ra,asjk->rsjk", directions, gradient)
    current = np.einsum("sjk,rsjk->rjk", spinor.conj(), 1j * rotated_gradient).real
    second = np.einsum("rsjk->rjk", np.abs(rotated_gradient) ** 2)
    mean0 = current.sum(axis=(1, 2)) / weight
    initial = np.sqrt(np.maximum(second.sum(axis=(1, 2)) / weight - mean0**2, 0.0))

    displacement, fields = _grid_displacements(geometry, band, times, omega)
    rotated = displacement[..., 2:]  # (T, P, 2) in (E, perp)
    weights = density.ravel() / weight
    mean = np.einsum("p,tpr->tr", weights, rotated)
    variance = np.einsum("p,tpr->tr", weights, rotated**2) - mean**2
    correlation = (2 * np.einsum("rp,tpr->tr", current.reshape(2, -1) / weight, rotated)
                   - 2 * mean0[None, :] * mean)

    phases = _grid_phases(geometry)
    g11, g12, g22 = fields.metric

    def rotated_metric(phi1, phi2):
        values = np.array([g11(phi1, phi2), g12(phi1, phi2), g22(phi1, phi2)])
        return np.stack([d[0] ** 2 * values[0] + 2 * d[0] * d[1] * values[1] + d[1] ** 2 * values[2]
                         for d in directions], axis=-1)

    period = TWO_PI / omega[0]
    start = rotated_metric(phases[:, 0], phases[:, 1])
    metric = np.array([
        weights @ (rotated_metric(phases[:, 0] - omega[0] * tau * period, phases[:, 1] - omega[1] * tau * period)
                   - start)
        for tau in times
    ])
    return SpreadingPrediction(times, initial, variance, metric, correlation)


@dataclass(frozen=True)
class QuasiPeriod:
    p1: int
    p2: int
    period: float
    rephasing_error: float


@dataclass(frozen=True)
class QuasiPeriodList:
    ratio: float
    entries: tuple[QuasiPeriod, ...]

    def as_list(self) -> list[dict]:
        return [{"p1": q.p1, "p2": q.p2, "T_over_T1": q.period, "rephasing_error": q.rephasing_error}
                for q in self.entries]


def quasi_periods(omega1: float, omega2: float, max_p1: int) -> QuasiPeriodList:
    """Continued-fraction convergents p₂/p₁ of ω₂/ω₁ with p₁ ≤ max_p1; T = p₁T₁."""
    if omega1 <= 0 or omega2 <= 0:
        raise ValueError("quasi-periods need positive frequencies")
    ratio = omega2 / omega1
    entries = []
    h_prev, h = 1, 0
    k_prev, k = 0, 1
    remainder = ratio
    while True:
        term = math.floor(remainder)
        h_prev, h = h, term * h + h_prev
        k_prev, k = k, term * k + k_prev
        if k > max_p1:
            break
        error = TWO_PI * abs(k * ratio - h)
        entries.append(QuasiPeriod(p1=k, p2=h, period=float(k), rephasing_error=error))
        fraction = remainder - term
        if fraction < CONTINUED_FRACTION_TOL or error < CONTINUED_FRACTION_TOL:
            break
        remainder = 1 / fraction
    return QuasiPeriodList(ratio, tuple(entries))


def adiabatic_timescale(geometry: GeometryMap, omega=None) -> tuple[float, float]:
    """(ε_adiab, τ_adiab/T₁) with ε = max_Φ |⟨ψ₊|dH/dt|ψ₋⟩|/(E₊ - E₋)² and τ = 0.1·exp(π/(4ε))·T₁.

    The field is recovered from the bare bands as h = (E₋b₋ + E₊b₊)/2 and dH/dt = -Σωᵢ∂ᵢh·σ;
    the interband element is the component of dh/dt transverse to h.
    """
    omega = np.asarray(geometry.omega if omega is None else omega, dtype=float)
    h = 0.5 * np.einsum("jkb,jkba->jka", geometry.energies, geometry.bloch)
    step1, step2 = TWO_PI / geometry.shape[0], TWO_PI / geometry.shape[1]
    d1 = (np.roll(h, -1, axis=0) - np.roll(h, 1, axis=0)) / (2 * step1)
    d2 = (np.roll(h, -1, axis=1) - np.roll(h, 1, axis=1)) / (2 * step2)
    rate = -(omega[0] * d1 + omega[1] * d2)
    length = np.linalg.norm(h, axis=-1)
    unit = h / length[..., None]
    transverse = rate - np.sum(rate * unit, axis=-1, keepdims=True) * unit
    epsilon = float(np.max(np.linalg.norm(transverse, axis=-1) / (2 * length) ** 2))
    if epsilon == 0:
        return 0.0, math.inf
    exponent = math.pi / (4 * epsilon)
    tau = 0.1 * math.exp(exponent) if exponent < 700 else math.inf
    logger.debug("ε_adiab = %.4g, τ_adiab = %.4g T1", epsilon, tau)
    return epsilon, tau


def _warn_width(dphi: float) -> None:
    if dphi > config.SMALL_WIDTH_LIMIT:
        message = f"Δφ = {dphi:.3f} is outside the small-width expansion"
        logger.warning(message)
        warnings.warn(message, SmallWidthWarning, stacklevel=3)


@dataclass(frozen=True)
class PurityPrediction:
    times: np.ndarray
    purity: np.ndarray
    average: float
    bound: float

    @property
    def satisfies_bound(self) -> bool:
        return self.average <= self.bound


def purity_prediction(geometry: GeometryMap, band: int, phase0: Phase2, dphi: float, times,
                      omega=None) -> PurityPrediction:
    """γ(t) = 1 - 2Δφ²(g₁₁ + g₂₂)(Φ⁰ - ωt) and the bound 1 - |C_ν|Δφ²/π on its time average."""
    _warn_width(dphi)
    omega = _frequencies(geometry, omega)
    times = _check_times(times)
    fields = band_fields(geometry, band)
    period = TWO_PI / omega[0]
    phi1 = phase0.phi1 - omega[0] * times * period
    phi2 = phase0.phi2 - omega[1] * times * period
    trace = fields.metric[0](phi1, phi2) + fields.metric[2](phi1, phi2)
    purity = 1 - 2 * dphi**2 * trace
    span = times[-1] - times[0]
    average = float(integrate.trapezoid(purity, times) / span) if span > 0 else float(purity[0])
    bound = 1 - abs(chern_number(geometry, band)) * dphi**2 / math.pi
    return PurityPrediction(times, purity, average, bound)


def pumping_rate(w_minus: float, w_plus: float, chern_minus: int, omega) -> float:
    """Transverse pumping rate -|ω|C₋(W₋ - W₊)/(2π) of a superposition of both bands, per unit time."""
    return float(-np.linalg.norm(omega) * chern_minus * (w_minus - w_plus) / TWO_PI)


@dataclass(frozen=True)
class GeometricPumping:
    p1: int
    p2: int
    phase_offsets: np.ndarray
    pumped: np.ndarray
    average: float
    theory: float


def geometric_pumping(geometry: GeometryMap, band: int, phase0: Phase2, p1: int, p2: int,
                      samples: int = 64) -> GeometricPumping:
    """n_perp pumped over one closed period p₁T₁ for the commensurate ratio ω₂/ω₁ = p₂/p₁.

    The transfer depends on where the closed orbit sits; averaged over orbits shifted along φ₂
    it equals -|ω|C_ν T/(2π).
    """
    omega1 = float(geometry.omega[0]) if geometry.omega[0] > 0 else 1.0
    omega = np.array([omega1, omega1 * p2 / p1])
    fields = band_fields(geometry, band)
    offsets = TWO_PI * np.arange(samples) / samples
    phases = np.stack([np.full(samples, phase0.phi1), phase0.phi2 + offsets], axis=-1)
    n = _displacements(fields, omega, phases, np.array([float(p1)]))[0]
    _, pumped = rotated_coordinates(n, omega)
    theory = -np.linalg.norm(omega) * chern_number(geometry, band) * (p1 * TWO_PI / omega1) / TWO_PI
    return GeometricPumping(p1, p2, offsets, pumped, float(pumped.mean()), float(theory))


@dataclass(frozen=True)
class PolarizationPrediction:
    times: np.ndarray
    polarization: np.ndarray

    @property
    def purity(self) -> np.ndarray:
        return (1 + np.sum(self.polarization**2, axis=-1)) / 2


def polarization_prediction(geometry: GeometryMap, band: int, amplitude: PhaseAmplitudeMap, times,
                            omega=None) -> PolarizationPrediction:
    """Q_ν(t) = ∫|χ_ν(Φ)|² b_ν(Φ - ωt) dΦ / W_ν: the translated-density mixture of Bloch vectors."""
    if amplitude.band != band or amplitude.values.shape != geometry.shape:
        raise ValueError("the amplitude map must resolve the same band on the geometry grid")
    omega = _frequencies(geometry, omega)
    times = _check_times(times)
    weights = _normalized(np.abs(amplitude.values) ** 2)
    fields = band_fields(geometry, band)
    phases = _grid_phases(geometry)
    period = TWO_PI / omega[0]
    polarization = []
    for tau in times:
        phi1 = phases[:, 0] - omega[0] * tau * period
        phi2 = phases[:, 1] - omega[1] * tau * period
        polarization.append([weights @ component(phi1, phi2) for component in fields.bloch])
    return PolarizationPrediction(times, np.array(polarization))
