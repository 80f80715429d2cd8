"""Site-factored Hilbert-space bookkeeping and dense state containers.

A chain of N identical sites, each site being a 2-level (g, r) or 3-level
(g, e, r) atom optionally tensored with a truncated harmonic oscillator.
Basis-index encoding is little-endian over sites (site 0 least significant);
within a site the atom index varies fastest, with the fixed level order
g=0, e=1, r=2 (e omitted in two-level mode).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, SpaceMismatchError, ValidationError

# Dense backends refuse to allocate state vectors beyond this many amplitudes.
DENSE_AMPLITUDE_CAP = 2**22

_LEVEL_ORDER = ("g", "e", "r")


class AtomLevels(enum.Enum):
    """Atomic level content of a site: 2-level (g,r) or 3-level (g,e,r)."""

    GR = 2
    GER = 3

    @property
    def dim(self) -> int:
        return self.value

    def level_index(self, level: str) -> int:
        """Index of a named level ('g', 'e', 'r') in the fixed ordering."""
        if level not in _LEVEL_ORDER:
            raise ValidationError(f"unknown atomic level {level!r}")
        if self is AtomLevels.GR:
            if level == "e":
                raise ValidationError("level 'e' does not exist in GR mode")
            return 0 if level == "g" else 1
        return _LEVEL_ORDER.index(level)


@dataclass(frozen=True)
class HilbertSpace:
    """Tensor-product space of `n_sites` sites on an open-boundary chain.

    phonon_cutoff = n_max is the largest oscillator quantum number kept per
    site; 0 disables phonons (local oscillator dimension n_max + 1). The
    dense cap binds whenever dim-sized dense or sparse structures are
    materialized (states, density matrices, embedded operators); spaces
    beyond the cap remain constructible for the MPS/TEBD path.
    """

    n_sites: int
    atom_levels: AtomLevels = AtomLevels.GR
    phonon_cutoff: int = 0
    dense_cap: int = DENSE_AMPLITUDE_CAP

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValidationError(f"n_sites must be positive, got {self.n_sites}")
        if self.phonon_cutoff < 0:
            raise ValidationError("phonon_cutoff must be >= 0")

    def require_dense(self):
        """Fail loudly instead of allocating a dim-sized object past the cap."""
        if self.dim > self.dense_cap:
            raise DimensionError(
                f"total dimension {self.dim} exceeds dense cap {self.dense_cap}; "
                "use the TEBD backend for systems of this size"
            )

    @property
    def atom_dim(self) -> int:
        return self.atom_levels.dim

    @property
    def phonon_dim(self) -> int:
        return self.phonon_cutoff + 1

    @property
    def site_dim(self) -> int:
        return self.atom_dim * self.phonon_dim

    @property
    def dim(self) -> int:
        return self.site_dim**self.n_sites

    @property
    def has_phonons(self) -> bool:
        return self.phonon_cutoff > 0

    def local_index(self, atom: int, phonon: int = 0) -> int:
        """Local site index of (atom level, phonon number); atom varies fastest."""
        if not 0 <= atom < self.atom_dim:
            raise ValidationError(f"atom index {atom} out of range")
        if not 0 <= phonon < self.phonon_dim:
            raise ValidationError(f"phonon index {phonon} exceeds cutoff")
        return atom + self.atom_dim * phonon

    def encode(self, site_indices) -> int:
        """Basis index of a site-configuration (little-endian over sites)."""
        site_indices = list(site_indices)
        if len(site_indices) != self.n_sites:
            raise DimensionError("one local index per site required")
        idx = 0
        for j in reversed(range(self.n_sites)):
            c = site_indices[j]
            if not 0 <= c < self.site_dim:
                raise ValidationError(f"local index {c} out of range at site {j}")
            idx = idx * self.site_dim + c
        return idx

    def decode(self, index: int) -> tuple[int, ...]:
        """Inverse of :meth:`encode`."""
        if not 0 <= index < self.dim:
            raise ValidationError(f"basis index {index} out of range")
        out = []
        for _ in range(self.n_sites):
            index, c = divmod(index, self.site_dim)
            out.append(c)
        return tuple(out)

    def site_ket(self, level: str, phonon: int = 0) -> np.ndarray:
        """Normalized local basis ket |level, phonon> of this space's site."""
        ket = np.zeros(self.site_dim, dtype=complex)
        ket[self.local_index(self.atom_levels.level_index(level), phonon)] = 1.0
        return ket


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PureState:
    """Dense state vector over a :class:`HilbertSpace`. Immutable."""

    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        self.space.require_dense()
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.space.dim,):
            raise DimensionError(
                f"amplitude vector has shape {amps.shape}, expected ({self.space.dim},)"
            )
        if not np.all(np.isfinite(amps)):
            raise ValidationError("non-finite amplitudes")
        object.__setattr__(self, "amplitudes", _freeze(amps))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "PureState") -> complex:
        _require_same_space(self.space, other.space)
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    """Dense density operator over a :class:`HilbertSpace`. Immutable."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        self.space.require_dense()
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.space.dim, self.space.dim):
            raise DimensionError("density matrix shape does not match space")
        if not np.all(np.isfinite(mat)):
            raise ValidationError("non-finite density matrix entries")
        object.__setattr__(self, "matrix", _freeze(mat))

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def check(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8):
        """Assert Hermiticity / unit trace / positivity within tolerances."""
        herm = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if herm > herm_tol:
            raise ValidationError(f"density matrix not Hermitian: residual {herm:.2e}")
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise ValidationError(f"density matrix trace {tr} deviates from 1")
        lo = float(np.linalg.eigvalsh(self.matrix)[0])
        if lo < -eig_tol:
            raise ValidationError(f"density matrix has negative eigenvalue {lo:.2e}")

    @staticmethod
    def from_pure(state: PureState) -> "DensityMatrix":
        psi = state.amplitudes
        return DensityMatrix(state.space, np.outer(psi, psi.conj()))


HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class OperatorHandle:
    """Immutable sparse operator bound to a Hilbert space.

    `hermitian` is set by an explicit entrywise check at construction
    (max |A - A^dag| <= 1e-12), never assumed.
    """

    space: HilbertSpace
    matrix: sp.csr_matrix
    hermitian: bool = field(init=False)

    def __post_init__(self):
        mat = sp.csr_matrix(self.matrix, dtype=complex)
        if mat.shape != (self.space.dim, self.space.dim):
            raise DimensionError("operator shape does not match space")
        diff = mat - mat.conjugate().T
        herm = abs(diff).max() if diff.nnz else 0.0
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "hermitian", bool(herm <= HERMITICITY_TOL))

    def apply(self, state: PureState) -> PureState:
        _require_same_space(self.space, state.space)
        return PureState(state.space, self.matrix @ state.amplitudes)

    def dagger(self) -> "OperatorHandle":
        return OperatorHandle(self.space, self.matrix.conjugate().T.tocsr())

    def __add__(self, other: "OperatorHandle") -> "OperatorHandle":
        _require_same_space(self.space, other.space)
        return OperatorHandle(self.space, self.matrix + other.matrix)

    def __matmul__(self, other: "OperatorHandle") -> "OperatorHandle":
        _require_same_space(self.space, other.space)
        return OperatorHandle(self.space, (self.matrix @ other.matrix).tocsr())


def _require_same_space(a: HilbertSpace, b: HilbertSpace):
    if a != b:
        raise SpaceMismatchError(f"Hilbert spaces differ: {a} vs {b}")


KET_NORM_TOL = 1e-9


def product_state(space: HilbertSpace, site_kets) -> PureState:
    """Dense product state from one normalized local ket per site.

    The amplitude of an encoded basis index equals the product of the local
    amplitudes, i.e. psi = ket_{N-1} (x) ... (x) ket_0 in little-endian order.
    """
    kets = [np.asarray(k, dtype=complex) for k in site_kets]
    if len(kets) != space.n_sites:
        raise DimensionError(
            f"{space.n_sites} local kets required, got {len(kets)}"
        )
    for j, k in enumerate(kets):
        if k.shape != (space.site_dim,):
            raise DimensionError(f"local ket at site {j} has wrong dimension")
        if abs(np.linalg.norm(k) - 1.0) > KET_NORM_TOL:
            raise ValidationError(f"local ket at site {j} is not normalized")
    amps = np.ones(1, dtype=complex)
    for k in kets:  # site 0 first -> ends least significant
        amps = np.kron(k, amps)
    return PureState(space, amps)


def basis_state(space: HilbertSpace, site_indices) -> PureState:
    """Computational basis state for a site-configuration."""
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.encode(site_indices)] = 1.0
    return PureState(space, amps)


def embed_site_operator(space: HilbertSpace, site: int, local_op) -> OperatorHandle:
    """Operator acting as `local_op` on `site` and as identity elsewhere."""
    space.require_dense()
    if not 0 <= site < space.n_sites:
        raise DimensionError(f"site {site} out of range for N={space.n_sites}")
    op = sp.csr_matrix(np.asarray(local_op, dtype=complex))
    if op.shape != (space.site_dim, space.site_dim):
        raise DimensionError(
            f"local operator is {op.shape}, site dimension is {space.site_dim}"
        )
    left = sp.identity(space.site_dim ** (space.n_sites - 1 - site), format="csr")
    right = sp.identity(space.site_dim**site, format="csr")
    full = sp.kron(left, sp.kron(op, right, format="csr"), format="csr")
    return OperatorHandle(space, full)


def identity_operator(space: HilbertSpace) -> OperatorHandle:
    space.require_dense()
    return OperatorHandle(space, sp.identity(space.dim, format="csr", dtype=complex))


def zero_operator(space: HilbertSpace) -> OperatorHandle:
    space.require_dense()
    return OperatorHandle(space, sp.csr_matrix((space.dim, space.dim), dtype=complex))


IMAG_RESIDUE_TOL = 1e-10


def expectation(state, op: OperatorHandle):
    """<psi|A|psi> or Tr(rho A); real for Hermitian A (imag residue <= 1e-10)."""
    _require_same_space(state.space, op.space)
    if isinstance(state, PureState):
        val = complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    elif isinstance(state, DensityMatrix):
        val = complex(np.trace(op.matrix @ state.matrix))
    else:
        raise TypeError(f"expected PureState or DensityMatrix, got {type(state)}")
    if op.hermitian:
        scale = max(1.0, abs(val))
        if abs(val.imag) > IMAG_RESIDUE_TOL * scale:
            raise ValidationError(
                f"Hermitian expectation has imaginary residue {val.imag:.2e}"
            )
        return float(val.real)
    return val


def norm_and_normalize(state: PureState) -> tuple[float, PureState]:
    """Euclidean norm and the rescaled unit vector; zero norm is an error."""
    nrm = state.norm()
    if nrm == 0.0:
        raise ValidationError("cannot normalize the zero vector")
    return nrm, PureState(state.space, state.amplitudes / nrm)
