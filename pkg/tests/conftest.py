"""Shared fixtures: the BHZ field at the reference parameters, small lattices and a two-level integrator."""

import math
from pathlib import Path

import numpy as np
import pytest

from catpump.qubit_geometry import BHZField, FlatField, qubit_hamiltonian
from catpump.rotor_lattice import LatticeTruncation, build_lattice

GAP = 2.0
GOLDEN = (1 + math.sqrt(5)) / 2
OMEGA1 = 0.075 * GAP
OMEGA = np.array([OMEGA1, GOLDEN * OMEGA1])
PERIOD = 2 * math.pi / OMEGA1


@pytest.fixture
def bhz():
    return BHZField(gap=GAP)


@pytest.fixture
def flat():
    return FlatField(gap=GAP)


@pytest.fixture
def omega():
    return OMEGA.copy()


@pytest.fixture
def small_truncation():
    """A rotated rectangle a few sites across, dimension in the low hundreds."""
    return LatticeTruncation.enclosing(5.0, 7.0, tuple(OMEGA))


@pytest.fixture
def small_lattice(small_truncation):
    return build_lattice(small_truncation)


@pytest.fixture
def medium_lattice():
    """Wide enough to hold a Δn ≈ 1 Gaussian with margin, small enough for dense eigensolves."""
    return build_lattice(LatticeTruncation.enclosing(9.0, 11.0, tuple(OMEGA)))


@pytest.fixture
def config_file(tmp_path) -> Path:
    """Writes a TOML experiment file and returns its path."""
    def write(text: str = "") -> Path:
        path = tmp_path / "experiment.toml"
        path.write_text(text, encoding="utf-8")
        return path
    return write


def two_level_propagator(model, omega, phase0, t: float, steps: int = 100_000) -> np.ndarray:
    """Time-ordered U(t) of H(t′) = h(Φ₀ − ωt′)·σ from exponential midpoint steps."""
    dt = t / steps
    midpoints = (np.arange(steps) + 0.5) * dt
    h = model.components(phase0[0] - omega[0] * midpoints, phase0[1] - omega[1] * midpoints)
    norm = np.linalg.norm(h, axis=-1)
    increments = (np.cos(norm * dt)[:, None, None] * np.eye(2)
                  - 1j * (np.sin(norm * dt) / norm)[:, None, None] * qubit_hamiltonian(h))
    propagator = np.eye(2, dtype=complex)
    for step in increments:
        propagator = step @ propagator
    return propagator
