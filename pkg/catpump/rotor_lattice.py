"""Truncated number lattice and sparse assembly of Ĥ_tot = ħω·N̂ + h(Φ̂)·σ.

Basis ordering is |site⟩ ⊗ {↑, ↓}: the spin index is the fast one, so the amplitude of
site i and spin s sits at position 2i + s. The shift convention is e^{iφ̂}|n⟩ = |n-1⟩,
hence the Fourier term c_m e^{im·Φ̂} maps |N⟩ to |N - m⟩.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from catpump import artifacts, config
from catpump.exceptions import EmptyLattice, NonHermitianAssembly
from catpump.qubit_geometry import PAULI, TwoLevelField

logger = logging.getLogger(__name__)

HERMITICITY_TOL = 1e-14
ROTATION_TOL = 1e-12


def rotated_coordinates(sites, omega) -> tuple[np.ndarray, np.ndarray]:
    """Number coordinates along and transverse to ω.

    n_E = (ω₁n₁ + ω₂n₂)/|ω| and n_perp = (-ω₂n₁ + ω₁n₂)/|ω|.
    """
    sites = np.asarray(sites, dtype=float)
    w1, w2 = np.asarray(omega, dtype=float)
    norm = math.hypot(w1, w2)
    if norm == 0:
        raise ValueError("rotated coordinates need a nonzero frequency vector")
    n1, n2 = sites[..., 0], sites[..., 1]
    return (w1 * n1 + w2 * n2) / norm, (-w2 * n1 + w1 * n2) / norm


@dataclass(frozen=True)
class LatticeTruncation:
    """Box bounds on (n₁, n₂) plus bounds on the rotated coordinates."""
    n1_bounds: tuple[int, int]
    n2_bounds: tuple[int, int]
    n_e_max: float
    n_perp_max: float
    omega: tuple[float, float]

    def __post_init__(self):
        (a, b), (c, d) = self.n1_bounds, self.n2_bounds
        if a > b or c > d:
            raise EmptyLattice(f"box bounds are inverted: {self.n1_bounds}, {self.n2_bounds}")
        if self.n_e_max <= 0 or self.n_perp_max <= 0:
            raise EmptyLattice("rotated bounds must be positive")

    @classmethod
    def enclosing(cls, n_e_max: float, n_perp_max: float, omega) -> LatticeTruncation:
        """Truncation whose box just encloses the rotated rectangle around the origin."""
        w1, w2 = np.abs(np.asarray(omega, dtype=float)) / math.hypot(*omega)
        reach1 = math.ceil(n_e_max * w1 + n_perp_max * w2)
        reach2 = math.ceil(n_e_max * w2 + n_perp_max * w1)
        return cls((-reach1, reach1), (-reach2, reach2), n_e_max, n_perp_max, tuple(omega))

    @classmethod
    def desk(cls, omega) -> LatticeTruncation:
        box = config.DESK_BOX
        return cls(box[:2], box[2:], config.DESK_N_E_MAX, config.DESK_N_PERP_MAX, tuple(omega))

    @classmethod
    def full(cls, omega) -> LatticeTruncation:
        box = config.FULL_BOX
        return cls(box[:2], box[2:], config.FULL_N_E_MAX, config.FULL_N_PERP_MAX, tuple(omega))


@dataclass(frozen=True, eq=False)
class NumberLattice:
    """Retained sites in lexicographic (n₁, n₂) order with a dense reverse lookup."""
    sites: np.ndarray
    omega: np.ndarray
    corner: tuple[int, int]
    lookup: np.ndarray

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def dimension(self) -> int:
        return 2 * len(self.sites)

    def index_of(self, n1, n2) -> np.ndarray:
        """Site indices of (n₁, n₂), -1 where the site is not retained."""
        i1, i2 = np.broadcast_arrays(np.asarray(n1) - self.corner[0], np.asarray(n2) - self.corner[1])
        inside = (i1 >= 0) & (i1 < self.lookup.shape[0]) & (i2 >= 0) & (i2 < self.lookup.shape[1])
        out = np.full(np.broadcast(i1, i2).shape, -1, dtype=np.int64)
        out[inside] = self.lookup[i1[inside], i2[inside]]
        return out

    def rotated(self) -> tuple[np.ndarray, np.ndarray]:
        return rotated_coordinates(self.sites, self.omega)

    def boundary_mask(self, width: int = config.BOUNDARY_WIDTH) -> np.ndarray:
        """Sites with a missing site within `width` steps along either axis."""
        mask = np.zeros(self.size, dtype=bool)
        for d1 in range(-width, width + 1):
            for d2 in range(-width, width + 1):
                mask |= self.index_of(self.sites[:, 0] + d1, self.sites[:, 1] + d2) < 0
        return mask

    def interior_mask(self, reach: int = 1) -> np.ndarray:
        """Sites whose full hopping stencil of the given reach is retained."""
        return ~self.boundary_mask(reach)


def build_lattice(trunc: LatticeTruncation) -> NumberLattice:
    """Enumerate the retained sites of a truncation.

    Raises:
        EmptyLattice: if no site survives the rotated bounds.
    """
    (n1_min, n1_max), (n2_min, n2_max) = trunc.n1_bounds, trunc.n2_bounds
    n1, n2 = np.meshgrid(np.arange(n1_min, n1_max + 1), np.arange(n2_min, n2_max + 1), indexing="ij")
    box = np.stack([n1.ravel(), n2.ravel()], axis=-1)
    n_e, n_perp = rotated_coordinates(box, trunc.omega)
    keep = (np.abs(n_e) <= trunc.n_e_max + ROTATION_TOL) & (np.abs(n_perp) <= trunc.n_perp_max + ROTATION_TOL)
    if not keep.any():
        raise EmptyLattice(f"no site retained by {trunc}")

    sites = box[keep]
    lookup = np.full(n1.shape, -1, dtype=np.int64)
    lookup[sites[:, 0] - n1_min, sites[:, 1] - n2_min] = np.arange(len(sites))
    logger.info("Lattice with %d sites (dimension %d)", len(sites), 2 * len(sites))
    return NumberLattice(sites=sites, omega=np.asarray(trunc.omega, dtype=float),
                         corner=(n1_min, n2_min), lookup=lookup)


@dataclass(frozen=True, eq=False)
class SparseHermitian:
    """Hermitian operator on the (site ⊗ spin) basis in CSR layout."""
    matrix: sparse.csr_matrix

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.matrix.data).max()) if self.matrix.nnz else 0.0

    def hermiticity_defect(self) -> float:
        difference = self.matrix - self.matrix.conj().T
        return float(np.abs(difference.data).max()) if difference.nnz else 0.0

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dump(self, path: str | Path) -> Path:
        """Write the nonzero entries as `row col re im` triplets after a dimension header."""
        coo = self.matrix.tocoo()
        rows = [[int(r), int(c), v.real, v.imag] for r, c, v in zip(coo.row, coo.col, coo.data)]
        return artifacts.write_table(path, ["row", "col", "re", "im"], rows,
                                     header=f"# dimension {self.dimension}", delimiter=" ")


def assemble_total(lattice: NumberLattice, model: TwoLevelField, omega) -> SparseHermitian:
    """Assemble ħ(ω·N)𝟙₂ plus the hopping blocks of h(Φ̂)·σ; hops leaving the lattice are dropped.

    Raises:
        EmptyLattice: for a lattice without sites.
        NonHermitianAssembly: if the assembled matrix is not Hermitian.
    """
    if lattice.size == 0:
        raise EmptyLattice("cannot assemble on an empty lattice")
    omega = np.asarray(omega, dtype=float)
    sites = lattice.sites
    source = np.arange(lattice.size)
    rows, cols, values = [], [], []

    for shift, coefficient in sorted(model.fourier_coefficients().items()):
        block = np.einsum("a,aij->ij", coefficient, PAULI)
        target = lattice.index_of(sites[:, 0] - shift[0], sites[:, 1] - shift[1])
        keep = target >= 0
        for a in range(2):
            for b in range(2):
                if block[a, b] == 0:
                    continue
                rows.append(2 * target[keep] + a)
                cols.append(2 * source[keep] + b)
                values.append(np.full(int(keep.sum()), block[a, b], dtype=complex))

    if np.any(omega):
        diagonal = np.repeat(sites @ omega, 2)
        rows.append(np.arange(lattice.dimension))
        cols.append(np.arange(lattice.dimension))
        values.append(diagonal.astype(complex))

    matrix = sparse.coo_matrix(
        (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
        shape=(lattice.dimension, lattice.dimension),
    ).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()

    operator = SparseHermitian(matrix)
    defect = operator.hermiticity_defect()
    if defect > HERMITICITY_TOL * operator.max_abs:
        raise NonHermitianAssembly(f"‖A - A†‖_max = {defect:.3e}")
    logger.debug("Assembled dimension %d with %d nonzeros", operator.dimension, matrix.nnz)
    return operator


def assemble_zero_frequency(lattice: NumberLattice, model: TwoLevelField) -> SparseHermitian:
    """H(Φ̂) alone, i.e. assemble_total at ω = 0."""
    return assemble_total(lattice, model, (0.0, 0.0))


def number_operator(lattice: NumberLattice, omega) -> np.ndarray:
    """Diagonal of ħω·N̂ on the (site ⊗ spin) basis."""
    return np.repeat(lattice.sites @ np.asarray(omega, dtype=float), 2)
