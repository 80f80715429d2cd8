"""Hamiltonians and jump operators of the detector model.

Everything is expressed in angular-frequency units with hbar = 1; the CLI
presets additionally fix Omega_gr = 1 as the unit of time. The amplification
Hamiltonian is

    H_a = Omega_gr sum_j (|r><g|_j + h.c.) + Delta_gr sum_j n_j^(r)
          + V_rr sum_{j<N-1} n_j^(r) n_{j+1}^(r)

on an open-boundary chain; the phonon-coupled variant adds
nu sum_j a_j^dag a_j + kappa sum_j n_j^(r) n_{j+1}^(r) (x_j - x_{j+1}) with
x = a + a^dag in dimensionless oscillator units, so kappa is the only
phonon-coupling input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .hilbert import (
    AtomLevels,
    HilbertSpace,
    OperatorHandle,
    PureState,
    embed_site_operator,
    expectation,
    zero_operator,
)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the atomic chain (rates >= 0 enforced)."""

    n_sites: int
    omega_gr: float = 1.0
    delta_gr: float = 0.0
    v_rr: float = 0.0
    gamma_thz: float = 0.0
    gamma_deph: float = 0.0

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValidationError("n_sites must be positive")
        if self.gamma_thz < 0:
            raise ValidationError("gamma_thz must be non-negative")
        if self.gamma_deph < 0:
            raise ValidationError("gamma_deph must be non-negative")

    @property
    def facilitation_residual(self) -> float:
        """delta_gr + v_rr; zero under the facilitation condition."""
        return self.delta_gr + self.v_rr


@dataclass(frozen=True)
class PhononParams:
    """Harmonic-trap parameters; mass and dv_dx feed compute_kappa only."""

    nu: float
    kappa: float
    cutoff: int
    mass: float = 1.0
    dv_dx: float = 0.0

    def __post_init__(self):
        if self.nu <= 0:
            raise ValidationError("trap frequency nu must be positive")
        if self.cutoff < 1:
            raise ValidationError("phonon cutoff must be >= 1 when phonons are enabled")


class HamiltonianKind(enum.Enum):
    AMPLIFICATION = "amplification"
    AMPLIFICATION_PHONON = "amplification_phonon"
    EFFECTIVE_LOCAL = "effective_local"
    EFFECTIVE_COLLECTIVE = "effective_collective"
    ZERO = "zero"


class JumpKind(enum.Enum):
    THZ_LOCAL = "thz_local"
    THZ_COLLECTIVE = "thz_collective"
    DEPHASING = "dephasing"


def atom_matrix(space: HilbertSpace, entries) -> np.ndarray:
    """Site-local matrix from {('a','b'): value} meaning value * |a><b|.

    With phonons enabled the atomic operator is extended as identity on the
    oscillator factor (atom index varies fastest within a site).
    """
    lv = space.atom_levels.level_index
    atom = np.zeros((space.atom_dim, space.atom_dim), dtype=complex)
    for (a, b), val in entries.items():
        atom[lv(a), lv(b)] += val
    if not space.has_phonons:
        return atom
    return np.kron(np.eye(space.phonon_dim), atom)


def phonon_matrix(space: HilbertSpace, which: str) -> np.ndarray:
    """Site-local oscillator operator ('lower', 'number' or 'x') (x) identity."""
    n = space.phonon_dim
    a = np.diag(np.sqrt(np.arange(1, n)), 1)
    ops = {"lower": a, "number": a.T @ a, "x": a + a.T}
    if which not in ops:
        raise ValidationError(f"unknown phonon operator {which!r}")
    return np.kron(ops[which], np.eye(space.atom_dim))


def number_r(space: HilbertSpace) -> np.ndarray:
    return atom_matrix(space, {("r", "r"): 1.0})


def number_e(space: HilbertSpace) -> np.ndarray:
    return atom_matrix(space, {("e", "e"): 1.0})


def _sum_embedded(space, local_op) -> OperatorHandle:
    total = zero_operator(space)
    for j in range(space.n_sites):
        total = total + embed_site_operator(space, j, local_op)
    return total


def build_hamiltonian(
    space: HilbertSpace,
    params: ModelParams,
    phonons: PhononParams | None = None,
    kind: HamiltonianKind = HamiltonianKind.AMPLIFICATION,
) -> OperatorHandle:
    """Sparse Hamiltonian of the requested kind on `space`.

    AMPLIFICATION / AMPLIFICATION_PHONON / ZERO are Hermitian; the effective
    kinds carry the non-Hermitian no-jump absorption term and require the
    three-level space.
    """
    if params.n_sites != space.n_sites:
        raise ValidationError("params.n_sites does not match the space")
    if kind is HamiltonianKind.ZERO:
        return zero_operator(space)

    needs_phonons = kind is HamiltonianKind.AMPLIFICATION_PHONON
    if needs_phonons and (phonons is None or not space.has_phonons):
        raise ValidationError("phonon parameters and a phonon space are required")
    if not needs_phonons and space.has_phonons:
        raise ValidationError(f"{kind.value} expects a phonon-free space")
    if phonons is not None and space.has_phonons and phonons.cutoff != space.phonon_cutoff:
        raise ValidationError("phonon cutoff disagrees with the space")

    if kind in (HamiltonianKind.EFFECTIVE_LOCAL, HamiltonianKind.EFFECTIVE_COLLECTIVE):
        if space.atom_levels is not AtomLevels.GER:
            raise ValidationError("effective Hamiltonians require GER level mode")

    flip = atom_matrix(space, {("r", "g"): 1.0, ("g", "r"): 1.0})
    n_r = number_r(space)
    h = _sum_embedded(space, params.omega_gr * flip + params.delta_gr * n_r)
    for j in range(space.n_sites - 1):
        nj = embed_site_operator(space, j, n_r)
        nj1 = embed_site_operator(space, j + 1, n_r)
        h = h + OperatorHandle(space, params.v_rr * (nj.matrix @ nj1.matrix))

    if kind is HamiltonianKind.AMPLIFICATION:
        return h

    if kind is HamiltonianKind.AMPLIFICATION_PHONON:
        n_ph = phonon_matrix(space, "number")
        x = phonon_matrix(space, "x")
        h = h + _sum_embedded(space, phonons.nu * n_ph)
        nx = n_r @ x  # n^(r) and x act on different site factors: commute
        for j in range(space.n_sites - 1):
            lhs = embed_site_operator(space, j, nx).matrix @ embed_site_operator(
                space, j + 1, n_r
            ).matrix
            rhs = embed_site_operator(space, j, n_r).matrix @ embed_site_operator(
                space, j + 1, nx
            ).matrix
            h = h + OperatorHandle(space, phonons.kappa * (lhs - rhs))
        return h

    if kind is HamiltonianKind.EFFECTIVE_LOCAL:
        n_e = _sum_embedded(space, number_e(space))
        return OperatorHandle(
            space, h.matrix - 0.5j * params.gamma_thz * n_e.matrix
        )

    # EFFECTIVE_COLLECTIVE: H - i(Gamma/2) (sum_j |e><r|_j)(sum_k |r><e|_k)
    lower = _sum_embedded(space, atom_matrix(space, {("r", "e"): 1.0}))
    raise_ = _sum_embedded(space, atom_matrix(space, {("e", "r"): 1.0}))
    return OperatorHandle(
        space,
        h.matrix - 0.5j * params.gamma_thz * (raise_.matrix @ lower.matrix),
    )


def build_jump(
    space: HilbertSpace,
    params: ModelParams,
    kind: JumpKind,
    site: int | None = None,
) -> OperatorHandle:
    """Jump operator: sqrt(Gamma)|r><e|_k, sqrt(Gamma) sum_j |r><e|_j or
    sqrt(gamma_deph)|r><r|_j."""
    if kind in (JumpKind.THZ_LOCAL, JumpKind.THZ_COLLECTIVE):
        if space.atom_levels is not AtomLevels.GER:
            raise ValidationError("THz jumps require GER level mode")
        amp = np.sqrt(params.gamma_thz)
        lower = atom_matrix(space, {("r", "e"): amp})
        if kind is JumpKind.THZ_LOCAL:
            if site is None:
                raise ValidationError("THZ_LOCAL requires a site")
            return embed_site_operator(space, site, lower)
        if site is not None:
            raise ValidationError("THZ_COLLECTIVE takes no site")
        return _sum_embedded(space, lower)

    if site is None:
        raise ValidationError("DEPHASING requires a site")
    proj = atom_matrix(space, {("r", "r"): np.sqrt(params.gamma_deph)})
    return embed_site_operator(space, site, proj)


def dephasing_jumps(space: HilbertSpace, params: ModelParams) -> list[OperatorHandle]:
    """Dephasing jump operators on every site."""
    return [
        build_jump(space, params, JumpKind.DEPHASING, site=j)
        for j in range(space.n_sites)
    ]


def absorption_rate(state: PureState, jumps) -> float:
    """Total quantum-jump rate sum_i <psi|L_i^dag L_i|psi> on a normalized state."""
    if abs(state.norm() - 1.0) > 1e-9:
        raise ValidationError("absorption_rate expects a normalized state")
    rate = 0.0
    for op in jumps:
        applied = op.apply(state)
        rate += float(np.real(np.vdot(applied.amplitudes, applied.amplitudes)))
    return rate


def compute_kappa(phonons: PhononParams) -> float:
    """Spin-phonon coupling kappa = (dV_rr/dx at a0) / sqrt(2 m nu)."""
    if phonons.mass <= 0:
        raise ValidationError("mass must be positive")
    return phonons.dv_dx / np.sqrt(2.0 * phonons.mass * phonons.nu)


def signal_operators(space: HilbertSpace) -> list[OperatorHandle]:
    """Per-site Rydberg projectors n_j^(r) whose expectations form S_j."""
    n_r = number_r(space)
    return [embed_site_operator(space, j, n_r) for j in range(space.n_sites)]


def total_signal_operator(space: HilbertSpace) -> OperatorHandle:
    return _sum_embedded(space, number_r(space))


def signal_profile(state, space: HilbertSpace | None = None) -> np.ndarray:
    """S_j = <n_j^(r)> for each site of `state`."""
    space = space or state.space
    return np.array([expectation(state, op) for op in signal_operators(space)])
