"""Time evolution on the truncated lattice and the observables read off evolved states."""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from catpump import config
from catpump.exceptions import (BoundaryContamination, BoundaryContaminationWarning, DimensionTooLarge,
                                EigensolverFailure, ZeroState)
from catpump.qubit_geometry import PAULI
from catpump.rotor_lattice import SparseHermitian, rotated_coordinates
from catpump.states import TotalState

logger = logging.getLogger(__name__)

METHODS = ("spectral", "krylov")
SPECTRAL_RESIDUAL_TOL = 1e-8
NORM_DRIFT_TOL = 1e-8
BREAKDOWN_TOL = 1e-12


@dataclass(eq=False)
class Propagator:
    """e^{-iĤt} for a fixed Hamiltonian, either from a full eigendecomposition or by Lanczos steps.

    Times passed to `apply` are absolute (ħ = 1); `period` converts from units of T₁.
    """
    method: str
    operator: SparseHermitian
    period: float = 1.0
    eigenvalues: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None
    krylov_dim: int = config.KRYLOV_DIM
    tolerance: float = config.KRYLOV_TOL
    max_step: float = config.KRYLOV_MAX_STEP

    def apply(self, vector: np.ndarray, t: float) -> np.ndarray:
        vector = np.asarray(vector, dtype=complex)
        if t == 0 or not np.any(vector):
            return vector.copy()
        if self.method == "spectral":
            coefficients = self.eigenvectors.conj().T @ vector
            return self.eigenvectors @ (np.exp(-1j * self.eigenvalues * t) * coefficients)
        return self._krylov_apply(vector, t)

    def _krylov_apply(self, vector: np.ndarray, t: float) -> np.ndarray:
        limit = self.max_step * self.period
        floor = 1e-6 * limit
        elapsed = 0.0
        step = math.copysign(min(abs(t), limit), t)
        while abs(t - elapsed) > 0:
            step = math.copysign(min(abs(step), abs(t - elapsed)), t)
            candidate, error = _lanczos_step(self.operator.matrix, vector, step, self.krylov_dim)
            if error > self.tolerance:
                if abs(step) > floor:
                    step /= 2
                    continue
                raise EigensolverFailure(
                    f"Krylov step error {error:.3e} above tolerance {self.tolerance:.1e} at the minimum step "
                    f"{abs(step):.3e} (subspace {self.krylov_dim})")
            vector = candidate
            elapsed += step
            step = math.copysign(limit, t)
        return vector


def _lanczos(matrix, vector: np.ndarray, numiter: int):
    """Lanczos iteration with full reorthogonalization; stops early on an invariant subspace."""
    norm = np.linalg.norm(vector)
    basis = np.zeros((numiter, len(vector)), dtype=complex)
    basis[0] = vector / norm
    alpha, beta = [], []
    residual = 0.0
    for j in range(numiter):
        w = matrix @ basis[j]
        alpha.append(np.vdot(basis[j], w).real)
        w = w - alpha[j] * basis[j] - (beta[j - 1] * basis[j - 1] if j > 0 else 0)
        w -= basis[:j + 1].T @ (basis[:j + 1].conj() @ w)
        residual = np.linalg.norm(w)
        if j == numiter - 1 or residual < BREAKDOWN_TOL * max(1.0, abs(alpha[j])):
            break
        beta.append(residual)
        basis[j + 1] = w / residual
    size = len(alpha)
    return np.array(alpha), np.array(beta), basis[:size], norm, residual


def _lanczos_step(matrix, vector: np.ndarray, dt: float, numiter: int) -> tuple[np.ndarray, float]:
    """One step e^{-iH dt}v in the Krylov space, with the a-posteriori error estimate."""
    alpha, beta, basis, norm, residual = _lanczos(matrix, vector, numiter)
    if len(alpha) == 1:
        values, vectors = alpha, np.ones((1, 1))
    else:
        values, vectors = linalg.eigh_tridiagonal(alpha, beta)
    small = vectors @ (np.exp(-1j * dt * values) * vectors[0])
    error = norm * residual * abs(small[-1])
    return basis.T @ (norm * small), error


def default_method(dimension: int) -> str:
    return "spectral" if dimension <= config.SPECTRAL_CAP else "krylov"


def build_propagator(operator: SparseHermitian, method: str = "auto", period: float = 1.0,
                     krylov_dim: int = config.KRYLOV_DIM, tolerance: float = config.KRYLOV_TOL,
                     cap: int = config.SPECTRAL_CAP, seed: int = 0) -> Propagator:
    """Prepare time evolution under a Hermitian operator.

    Args:
        operator: The assembled Hamiltonian.
        method: "spectral", "krylov" or "auto" (spectral up to the cap).
        period: Length of T₁ in internal time units.
        krylov_dim: Lanczos subspace dimension.
        tolerance: Per-step error tolerance of the Lanczos steps.
        cap: Largest dimension diagonalized in full.
        seed: Seed of the random vector used for the Krylov unitarity check.

    Raises:
        DimensionTooLarge: spectral method above the cap.
        EigensolverFailure: failed eigendecomposition, residuals above 1e-8·‖H‖_max,
            or a Krylov unitarity check off by more than 1e-9.
    """
    if method == "auto":
        method = "spectral" if operator.dimension <= cap else "krylov"
    if method not in METHODS:
        raise ValueError(f"unknown propagation method {method!r}")

    if method == "krylov":
        propagator = Propagator("krylov", operator, period, krylov_dim=krylov_dim, tolerance=tolerance)
        check = np.random.default_rng(seed).normal(size=operator.dimension) + 0j
        check /= np.linalg.norm(check)
        stepped = propagator.apply(check, config.KRYLOV_MAX_STEP * period)
        drift = abs(np.linalg.norm(stepped) - 1.0)
        if drift > 1e-9:
            raise EigensolverFailure(f"Krylov check step changed the norm by {drift:.3e}")
        logger.info("Krylov propagator ready (dimension %d, subspace %d)", operator.dimension, krylov_dim)
        return propagator

    if operator.dimension > cap:
        raise DimensionTooLarge(f"dimension {operator.dimension} exceeds the spectral cap {cap}")
    start = time.perf_counter()
    try:
        eigenvalues, eigenvectors = linalg.eigh(operator.toarray())
    except linalg.LinAlgError as error:
        raise EigensolverFailure(str(error)) from error
    residual = float(np.max(np.linalg.norm(operator.matrix @ eigenvectors - eigenvectors * eigenvalues, axis=0)))
    if residual > SPECTRAL_RESIDUAL_TOL * operator.max_abs:
        raise EigensolverFailure(f"eigenpair residual {residual:.3e} above tolerance")
    logger.info("Diagonalized dimension %d in %.2f s (max residual %.2e)",
                operator.dimension, time.perf_counter() - start, residual)
    return Propagator("spectral", operator, period, eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def boundary_mass(state: TotalState, width: int = config.BOUNDARY_WIDTH) -> float:
    """Population on sites within `width` steps of the truncation edge."""
    mask = state.lattice.boundary_mask(width)
    return float(np.sum(np.abs(state.spinors[mask]) ** 2))


def check_boundary(mass: float, t_over_period: float, abort: bool = True) -> None:
    """Warn above the boundary warning threshold and, when `abort` is set, raise above the error threshold."""
    if mass > config.BOUNDARY_ERROR and abort:
        raise BoundaryContamination(f"boundary mass {mass:.3e} at t = {t_over_period:g} T1")
    if mass > config.BOUNDARY_WARN:
        message = f"boundary mass {mass:.3e} at t = {t_over_period:g} T1"
        logger.warning(message)
        warnings.warn(message, BoundaryContaminationWarning, stacklevel=3)


def evolve(propagator: Propagator, state: TotalState, times, abort: bool = True) -> list[TotalState]:
    """States at the requested times, given in units of T₁.

    Each returned state carries `t_over_T1` and `boundary_mass` in its `meta`.

    Raises:
        BoundaryContamination: if `abort` and the boundary mass exceeds 1e-2.
        EigensolverFailure: if the norm drifts by more than 1e-8.
    """
    if state.lattice.dimension != propagator.operator.dimension:
        raise ValueError("state and propagator live on different lattices")
    times = [float(t) for t in times]
    initial_norm = state.norm()
    results: dict[int, TotalState] = {}

    current, current_time = state.vector, 0.0
    order = sorted(range(len(times)), key=lambda i: times[i]) if propagator.method == "krylov" else range(len(times))
    for i in order:
        tau = times[i]
        if propagator.method == "krylov":
            vector = propagator.apply(current, (tau - current_time) * propagator.period)
            current, current_time = vector, tau
        else:
            vector = propagator.apply(state.vector, tau * propagator.period)
        evolved = state.with_vector(vector)
        drift = abs(evolved.norm() - initial_norm)
        if drift > NORM_DRIFT_TOL:
            raise EigensolverFailure(f"norm drift {drift:.3e} at t = {tau:g} T1")
        mass = boundary_mass(evolved)
        check_boundary(mass, tau, abort)
        evolved.meta.update(t_over_T1=tau, boundary_mass=mass)
        results[i] = evolved
    logger.debug("Evolved %d time points", len(times))
    return [results[i] for i in range(len(times))]


def energy_expectation(operator: SparseHermitian, state: TotalState) -> float:
    """⟨Ψ|Ĥ|Ψ⟩/⟨Ψ|Ψ⟩."""
    squared = state.squared_norm()
    if squared == 0:
        raise ZeroState("energy of a zero state")
    return float(np.vdot(state.vector, operator.matrix @ state.vector).real / squared)


@dataclass(frozen=True)
class NumberDistribution:
    """P(n₁, n₂) = Σ_s |amp(n₁, n₂, s)|² on the retained sites."""
    sites: np.ndarray
    probabilities: np.ndarray

    def total(self) -> float:
        return float(self.probabilities.sum())

    def as_grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense array over the bounding box, with the n₁ and n₂ axes."""
        low = self.sites.min(axis=0)
        high = self.sites.max(axis=0)
        grid = np.zeros(tuple(high - low + 1))
        grid[self.sites[:, 0] - low[0], self.sites[:, 1] - low[1]] = self.probabilities
        return grid, np.arange(low[0], high[0] + 1), np.arange(low[1], high[1] + 1)

    def rotated_marginal(self, omega, transverse: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Marginal of n_perp (or n_E) in unit-width bins centred on integers."""
        n_e, n_perp = rotated_coordinates(self.sites, omega)
        values = n_perp if transverse else n_e
        bins = np.floor(values + 0.5).astype(np.int64)
        centres, inverse = np.unique(bins, return_inverse=True)
        weights = np.bincount(inverse, weights=self.probabilities, minlength=len(centres))
        return centres, weights

    def rows(self) -> list[list]:
        return [[int(n[0]), int(n[1]), p] for n, p in zip(self.sites, self.probabilities)]


def number_distribution(state: TotalState) -> NumberDistribution:
    return NumberDistribution(state.lattice.sites, np.sum(np.abs(state.spinors) ** 2, axis=1))


def reduced_qubit_matrix(state: TotalState) -> np.ndarray:
    """ρ_q = Tr₁₂|Ψ⟩⟨Ψ| / ‖Ψ‖²."""
    squared = state.squared_norm()
    if squared == 0:
        raise ZeroState("reduced matrix of a zero state")
    spinors = state.spinors
    return np.einsum("ia,ib->ab", spinors, spinors.conj()) / squared


OBSERVABLE_COLUMNS = ["t_over_T1", "n1_mean", "n2_mean", "nE_mean", "nperp_mean", "dnE", "dnperp",
                      "Qx", "Qy", "Qz", "purity", "norm", "boundary_mass"]


@dataclass(frozen=True)
class Observables:
    t_over_T1: float
    n1_mean: float
    n2_mean: float
    nE_mean: float
    nperp_mean: float
    dnE: float
    dnperp: float
    polarization: np.ndarray
    purity: float
    norm: float
    boundary_mass: float

    def row(self) -> list[float]:
        return [self.t_over_T1, self.n1_mean, self.n2_mean, self.nE_mean, self.nperp_mean, self.dnE,
                self.dnperp, *self.polarization, self.purity, self.norm, self.boundary_mass]


def observables(state: TotalState, omega) -> Observables:
    """Moments of the number distribution and the qubit polarization and purity of one state."""
    distribution = number_distribution(state)
    squared = distribution.total()
    if squared == 0:
        raise ZeroState("observables of a zero state")
    weights = distribution.probabilities / squared
    sites = distribution.sites.astype(float)
    n_e, n_perp = rotated_coordinates(sites, omega)

    def moments(values):
        mean = float(np.dot(weights, values))
        return mean, float(np.sqrt(max(np.dot(weights, (values - mean) ** 2), 0.0)))

    n_e_mean, dn_e = moments(n_e)
    n_perp_mean, dn_perp = moments(n_perp)
    rho = reduced_qubit_matrix(state)
    polarization = np.einsum("aij,ji->a", PAULI, rho).real
    purity = (1 + float(np.dot(polarization, polarization))) / 2
    mass = state.meta.get("boundary_mass")
    return Observables(
        t_over_T1=float(state.meta.get("t_over_T1", 0.0)),
        n1_mean=float(np.dot(weights, sites[:, 0])),
        n2_mean=float(np.dot(weights, sites[:, 1])),
        nE_mean=n_e_mean,
        nperp_mean=n_perp_mean,
        dnE=dn_e,
        dnperp=dn_perp,
        polarization=polarization,
        purity=purity,
        norm=math.sqrt(squared),
        boundary_mass=float(mass) if mass is not None else boundary_mass(state),
    )


@dataclass
class ObservableSeries:
    """Observables of a sequence of evolved states."""
    records: list[Observables] = field(default_factory=list)

    def append(self, record: Observables) -> None:
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        if name in ("Qx", "Qy", "Qz"):
            return np.array([r.polarization["xyz".index(name[1])] for r in self.records])
        return np.array([getattr(r, name) for r in self.records])

    def rows(self) -> list[list[float]]:
        return [record.row() for record in self.records]


def observable_series(states: list[TotalState], omega) -> ObservableSeries:
    return ObservableSeries([observables(state, omega) for state in states])
