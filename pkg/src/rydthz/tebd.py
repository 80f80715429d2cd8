"""Matrix-product-state backend with second-order Trotter TEBD.

Sites carry the fused local space (two-level atom (x) truncated oscillator),
so the phonon-coupled amplification Hamiltonian stays strictly on-site plus
nearest-neighbour and every Trotter gate is a two-site gate. The MPS is kept
in mixed-canonical form with an explicit orthogonality center; truncation
renormalizes the retained singular values and reports the discarded weight.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionError,
    TruncationQualityError,
    ValidationError,
)
from .hilbert import AtomLevels, HilbertSpace, PureState
from .model import ModelParams, PhononParams, atom_matrix, number_r, phonon_matrix

_ISOMETRY_TOL = 1e-10


@dataclass(frozen=True)
class TruncationPolicy:
    """Bond-truncation and Trotter-step policy (order is fixed second-order)."""

    trotter_dt: float
    chi_max: int = 64
    svd_cutoff: float = 1e-10
    order: int = 2

    def __post_init__(self):
        if self.trotter_dt <= 0:
            raise ValidationError("trotter_dt must be positive")
        if self.chi_max < 1:
            raise ValidationError("chi_max must be >= 1")
        if not 0.0 < self.svd_cutoff < 1e-2:
            raise ValidationError("svd_cutoff must lie in (0, 1e-2)")
        if self.order != 2:
            raise ValidationError("only second-order Trotter is implemented")


class MatrixProductState:
    """Open-boundary MPS with site tensors (left bond, local, right bond).

    Tensors strictly left of `center` are left-canonical, strictly right of
    it right-canonical. Canonical moves replace tensors rather than mutating
    them, so `copy()` is a cheap list copy.
    """

    def __init__(self, space: HilbertSpace, tensors, center: int = 0):
        if len(tensors) != space.n_sites:
            raise DimensionError("one site tensor per site required")
        d = space.site_dim
        for j, t in enumerate(tensors):
            if t.ndim != 3 or t.shape[1] != d:
                raise DimensionError(f"site tensor {j} has shape {t.shape}")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise DimensionError("boundary bonds must have dimension 1")
        for j in range(space.n_sites - 1):
            if tensors[j].shape[2] != tensors[j + 1].shape[0]:
                raise DimensionError(f"bond mismatch between sites {j} and {j + 1}")
        if not 0 <= center < space.n_sites:
            raise ValidationError("orthogonality center out of range")
        self.space = space
        self.tensors = list(tensors)
        self.center = center

    @property
    def n_sites(self) -> int:
        return self.space.n_sites

    @property
    def local_dim(self) -> int:
        return self.space.site_dim

    @property
    def orthogonality_center(self) -> int:
        return self.center

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "MatrixProductState":
        return MatrixProductState(self.space, list(self.tensors), self.center)

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensors[self.center]))

    # -- canonical moves ----------------------------------------------------

    def _move_right(self):
        c = self.center
        t = self.tensors[c]
        chi_l, d, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l * d, chi_r))
        self.tensors[c] = q.reshape(chi_l, d, q.shape[1])
        self.tensors[c + 1] = np.tensordot(r, self.tensors[c + 1], axes=(1, 0))
        self.center = c + 1

    def _move_left(self):
        c = self.center
        t = self.tensors[c]
        chi_l, d, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l, d * chi_r).conj().T)
        self.tensors[c] = q.conj().T.reshape(q.shape[1], d, chi_r)
        self.tensors[c - 1] = np.tensordot(
            self.tensors[c - 1], r.conj().T, axes=(2, 0)
        )
        self.center = c - 1

    def move_center(self, site: int):
        if not 0 <= site < self.n_sites:
            raise ValidationError(f"site {site} out of range")
        while self.center < site:
            self._move_right()
        while self.center > site:
            self._move_left()

    def canonical_residual(self) -> float:
        """Largest isometry defect of the off-center tensors (test hook)."""
        worst = 0.0
        for j, t in enumerate(self.tensors):
            chi_l, d, chi_r = t.shape
            if j < self.center:
                m = t.reshape(chi_l * d, chi_r)
                worst = max(worst, np.max(np.abs(m.conj().T @ m - np.eye(chi_r))))
            elif j > self.center:
                m = t.reshape(chi_l, d * chi_r)
                worst = max(worst, np.max(np.abs(m @ m.conj().T - np.eye(chi_l))))
        return float(worst)

    # -- gates ----------------------------------------------------------------

    def apply_two_site_gate(self, bond: int, gate: np.ndarray, policy: TruncationPolicy):
        """Apply a (d*d, d*d) gate at (bond, bond+1); returns (discarded, saturated).

        The retained singular values are rescaled to preserve the norm; the
        discarded weight is the relative squared weight thrown away.
        """
        if not 0 <= bond < self.n_sites - 1:
            raise ValidationError(f"bond {bond} out of range")
        d = self.local_dim
        if self.center not in (bond, bond + 1):
            self.move_center(bond)
        theta = np.tensordot(self.tensors[bond], self.tensors[bond + 1], axes=(2, 0))
        chi_l, _, _, chi_r = theta.shape
        theta = theta.reshape(chi_l, d * d, chi_r)
        theta = np.tensordot(gate.reshape(d * d, d * d), theta, axes=(1, 1))
        theta = theta.transpose(1, 0, 2).reshape(chi_l * d, d * chi_r)
        u, s, vh, total = _truncated_svd(theta, policy.chi_max)

        if total == 0.0:
            raise ValidationError("gate application annihilated the state")
        keep_cutoff = max(1, int(np.sum(s > policy.svd_cutoff * s[0])))
        keep = min(keep_cutoff, policy.chi_max)
        saturated = keep_cutoff > policy.chi_max
        kept = float(s[:keep] @ s[:keep])
        discarded = max(0.0, 1.0 - kept / total)
        s_kept = s[:keep] * np.sqrt(total / kept)

        self.tensors[bond] = u[:, :keep].reshape(chi_l, d, keep)
        self.tensors[bond + 1] = (s_kept[:, None] * vh[:keep]).reshape(keep, d, chi_r)
        self.center = bond + 1
        return discarded, saturated

    # -- observables ------------------------------------------------------------

    def local_expectation(self, site: int, local_op: np.ndarray):
        """Single-site expectation via center contraction (normalized state)."""
        op = np.asarray(local_op, dtype=complex)
        if op.shape != (self.local_dim, self.local_dim):
            raise DimensionError("local operator dimension mismatch")
        self.move_center(site)
        t = self.tensors[site]
        val = np.einsum("ldr,de,ler->", t.conj(), op, t)
        nrm2 = np.real(np.einsum("ldr,ldr->", t.conj(), t))
        return complex(val / nrm2)

    def local_expectations_sweep(self, local_op: np.ndarray) -> np.ndarray:
        """<op>_j for every site in a single left-to-right pass (real parts)."""
        self.move_center(0)
        out = np.empty(self.n_sites)
        for j in range(self.n_sites):
            out[j] = np.real(self.local_expectation(j, local_op))
        return out


def _robust_svd(mat: np.ndarray):
    try:
        return scipy.linalg.svd(
            mat, full_matrices=False, lapack_driver="gesdd",
            check_finite=False, overwrite_a=False,
        )
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(
            mat, full_matrices=False, lapack_driver="gesvd", check_finite=False
        )


_SKETCH_SEED = 0x5EED_5BD  # fixed: the sketch must be bit-reproducible
_RANDOMIZED_OVERSAMPLE = 32


def _truncated_svd(mat: np.ndarray, rank_cap: int):
    """Top singular triplets of `mat` with the exact squared Frobenius norm.

    Small problems use LAPACK directly. Large ones use a seeded randomized
    range finder (one power iteration): U stays exactly orthonormal, and the
    discarded weight is still measured against the exact Frobenius norm, so
    any sketch error is counted as (reported) truncation error, never hidden.
    """
    total = float(np.linalg.norm(mat) ** 2)
    ell = min(min(mat.shape), rank_cap + _RANDOMIZED_OVERSAMPLE)
    if min(mat.shape) <= max(256, 3 * ell):
        u, s, vh = _robust_svd(mat)
        return u, s, vh, total
    gen = np.random.default_rng(_SKETCH_SEED)
    sketch = gen.standard_normal((mat.shape[1], ell))
    y = mat @ sketch
    q, _ = np.linalg.qr(mat.conj().T @ y)  # one power iteration
    q2, _ = np.linalg.qr(mat @ q)
    small = q2.conj().T @ mat
    ub, s, vh = _robust_svd(small)
    return q2 @ ub, s, vh, total


def mps_local_expectation(psi: MatrixProductState, site: int, local_op):
    """Single-site expectation on a canonical MPS (center is moved on a copy)."""
    return psi.copy().local_expectation(site, local_op)


def mps_from_product(space: HilbertSpace, site_kets) -> MatrixProductState:
    """Bond-dimension-1 MPS for a product state (same contract as product_state)."""
    kets = [np.asarray(k, dtype=complex) for k in site_kets]
    if len(kets) != space.n_sites:
        raise DimensionError(f"{space.n_sites} local kets required, got {len(kets)}")
    tensors = []
    for j, k in enumerate(kets):
        if k.shape != (space.site_dim,):
            raise DimensionError(f"local ket at site {j} has wrong dimension")
        if abs(np.linalg.norm(k) - 1.0) > 1e-9:
            raise ValidationError(f"local ket at site {j} is not normalized")
        tensors.append(k.reshape(1, space.site_dim, 1))
    return MatrixProductState(space, tensors, center=0)


def mps_to_dense(psi: MatrixProductState) -> PureState:
    """Exact contraction to a dense PureState (dense cap enforced)."""
    psi.space.require_dense()
    block = psi.tensors[0]  # (1, d, chi)
    for t in psi.tensors[1:]:
        block = np.tensordot(block, t, axes=(block.ndim - 1, 0))
    block = block.reshape(block.shape[1:-1])  # axes (s0, s1, ..., s_{N-1})
    # little-endian encoding: site 0 least significant -> reverse axes for ravel
    amps = block.transpose(tuple(range(block.ndim - 1, -1, -1))).reshape(-1)
    return PureState(psi.space, amps)


def dense_to_mps(
    state: PureState, chi_max: int | None = None, cutoff: float = 0.0
) -> MatrixProductState:
    """SVD factorization of a dense state into a left-canonical MPS."""
    space = state.space
    d, n = space.site_dim, space.n_sites
    tensor = state.amplitudes.reshape((d,) * n)
    # dense index is little-endian over sites; bring axes to (s0, ..., s_{N-1})
    tensor = tensor.transpose(tuple(range(n - 1, -1, -1)))
    tensors = []
    chi_l = 1
    rest = tensor.reshape(chi_l * d, -1)
    for j in range(n - 1):
        u, s, vh = _robust_svd(rest)
        keep = int(np.sum(s > cutoff * s[0])) if s[0] > 0 else 1
        if chi_max is not None:
            keep = min(keep, chi_max)
        keep = max(keep, 1)
        tensors.append(u[:, :keep].reshape(chi_l, d, keep))
        chi_l = keep
        rest = (s[:keep, None] * vh[:keep]).reshape(chi_l * d, -1)
    tensors.append(rest.reshape(chi_l, d, 1))
    return MatrixProductState(space, tensors, center=n - 1)


def expand_with_phonon_vacuum(
    psi: MatrixProductState, phonon_cutoff: int
) -> MatrixProductState:
    """Embed an atom-only MPS into (atom (x) oscillator) sites in the vacuum.

    Zero-padding the local index keeps every canonical isometry intact, since
    the atom index varies fastest within the fused site.
    """
    if psi.space.has_phonons:
        raise ValidationError("input MPS already carries phonons")
    space = HilbertSpace(
        psi.space.n_sites, psi.space.atom_levels, phonon_cutoff,
        dense_cap=psi.space.dense_cap,
    )
    d_atom = psi.space.site_dim
    tensors = []
    for t in psi.tensors:
        chi_l, _, chi_r = t.shape
        new = np.zeros((chi_l, space.site_dim, chi_r), dtype=complex)
        new[:, :d_atom, :] = t
        tensors.append(new)
    return MatrixProductState(space, tensors, center=psi.center)


# -- bond Hamiltonians and gates -------------------------------------------------


def bond_hamiltonians(
    space: HilbertSpace, params: ModelParams, phonons: PhononParams | None
) -> list[np.ndarray]:
    """Hermitian (d^2, d^2) bond matrices; on-site pieces split half/half with
    full weight at the chain edges."""
    if space.atom_levels is not AtomLevels.GR:
        raise ValidationError("the TEBD backend runs two-level (GR) atoms only")
    if space.n_sites < 2:
        raise ValidationError("TEBD needs at least two sites")
    if space.has_phonons != (phonons is not None):
        raise ValidationError("phonon parameters must match the space")
    if phonons is not None and phonons.cutoff != space.phonon_cutoff:
        raise ValidationError("phonon cutoff disagrees with the space")

    d = space.site_dim
    n_r = number_r(space)
    onsite = params.omega_gr * atom_matrix(
        space, {("r", "g"): 1.0, ("g", "r"): 1.0}
    ) + params.delta_gr * n_r
    pair = params.v_rr * np.kron(n_r, n_r)
    if phonons is not None:
        onsite = onsite + phonons.nu * phonon_matrix(space, "number")
        nx = n_r @ phonon_matrix(space, "x")
        pair = pair + phonons.kappa * (np.kron(nx, n_r) - np.kron(n_r, nx))

    eye = np.eye(d)
    bonds = []
    for i in range(space.n_sites - 1):
        wl = 1.0 if i == 0 else 0.5
        wr = 1.0 if i + 1 == space.n_sites - 1 else 0.5
        h = wl * np.kron(onsite, eye) + wr * np.kron(eye, onsite) + pair
        bonds.append(h)
    return bonds


def _bond_gates(bonds: list[np.ndarray], dt: float) -> list[np.ndarray]:
    gates = []
    cache = {}
    for h in bonds:
        key = h.tobytes()
        if key not in cache:
            evals, evecs = np.linalg.eigh(h)
            cache[key] = (evecs * np.exp(-1j * dt * evals)) @ evecs.conj().T
        gates.append(cache[key])
    return gates


@dataclass
class TebdResult:
    """S_j(t) on the output grid plus truncation and phonon diagnostics."""

    times: np.ndarray
    n_r: np.ndarray  # (n_times, n_sites)
    discarded_weight: np.ndarray  # cumulative at each output time
    phonon_occupation: np.ndarray | None = None  # (n_times, n_sites)
    max_bond_dim: int = 0
    chi_saturated: bool = False
    final_state: MatrixProductState | None = None

    @property
    def total_signal(self) -> np.ndarray:
        return self.n_r.sum(axis=1)

    @property
    def total_discarded_weight(self) -> float:
        return float(self.discarded_weight[-1])


PHONON_OCCUPATION_WARN_FRACTION = 0.8
DISCARDED_WEIGHT_GATE = 1e-4


def tebd_evolve(
    psi: MatrixProductState,
    params: ModelParams,
    phonons: PhononParams | None,
    policy: TruncationPolicy,
    t_final: float,
    output_grid,
    keep_final_state: bool = False,
) -> TebdResult:
    """Second-order Trotter evolution (half odd, full even, half odd sweeps).

    Returns per-site Rydberg populations on the grid together with the
    accumulated discarded weight. Raises TruncationQualityError (result
    attached) when chi_max saturates with discarded weight above 1e-4.
    """
    grid = np.asarray(output_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or grid[0] != 0.0:
        raise ValidationError("output_grid must be 1D and start at 0")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValidationError("output_grid must be strictly increasing")
    if grid[-1] > t_final + 1e-12:
        raise ValidationError("output_grid extends past t_final")

    work = psi.copy()
    n = work.n_sites
    bonds = bond_hamiltonians(work.space, params, phonons)
    n_r = number_r(work.space)
    n_ph = phonon_matrix(work.space, "number") if phonons is not None else None

    odd = list(range(0, n - 1, 2))
    even = list(range(1, n - 1, 2))
    gate_cache: dict[float, tuple] = {}

    def gates_for(dt):
        if dt not in gate_cache:
            gate_cache[dt] = (_bond_gates(bonds, dt / 2), _bond_gates(bonds, dt))
        return gate_cache[dt]

    sig = np.empty((grid.size, n))
    disc = np.empty(grid.size)
    occ = np.empty((grid.size, n)) if n_ph is not None else None
    acc = 0.0
    max_chi = 1
    saturated = False

    def record(i):
        nonlocal max_chi
        sig[i] = work.local_expectations_sweep(n_r)
        disc[i] = acc
        if occ is not None:
            occ[i] = work.local_expectations_sweep(n_ph)
        max_chi = max(max_chi, max(work.bond_dims, default=1))

    def sweep(gates, bonds_in_pass):
        nonlocal acc, saturated
        for b in bonds_in_pass:
            w, sat = work.apply_two_site_gate(b, gates[b], policy)
            acc += w
            saturated = saturated or sat

    record(0)
    for i in range(1, grid.size):
        span = grid[i] - grid[i - 1]
        n_steps = max(1, int(np.ceil(span / policy.trotter_dt - 1e-9)))
        half, full = gates_for(span / n_steps)
        # adjacent odd half-steps between outputs merge into full steps:
        # (A_h B A_h)^n = A_h B (A B)^(n-1) A_h with A = odd, B = even bonds
        sweep(half, odd)
        for k in range(n_steps):
            sweep(full, even)
            sweep(full if k < n_steps - 1 else half, odd)
        record(i)

    if occ is not None:
        top = float(occ.max())
        if top > PHONON_OCCUPATION_WARN_FRACTION * work.space.phonon_cutoff:
            warnings.warn(
                f"phonon occupation {top:.2f} approaches the cutoff "
                f"{work.space.phonon_cutoff}; results may be truncated",
                stacklevel=2,
            )

    result = TebdResult(
        times=grid.copy(),
        n_r=sig,
        discarded_weight=disc,
        phonon_occupation=occ,
        max_bond_dim=max_chi,
        chi_saturated=saturated,
        final_state=work if keep_final_state else None,
    )
    if saturated and acc > DISCARDED_WEIGHT_GATE:
        raise TruncationQualityError(
            f"chi_max={policy.chi_max} saturated with discarded weight {acc:.2e}",
            result=result,
        )
    return result
