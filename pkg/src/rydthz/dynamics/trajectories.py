"""Monte-Carlo wavefunction (quantum-jump) unraveling of the master equation.

Each trajectory follows the non-Hermitian no-jump evolution under
H_eff = H - (i/2) sum_i L_i^dag L_i; a jump fires when the squared norm of
the unnormalized state crosses a pre-drawn uniform threshold. The squared
norm is monotone non-increasing, so the crossing time is located by
bisection on re-propagated substeps. Observables are recorded on the
normalized conditioned state.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrajectoryError, ValidationError
from ..hilbert import OperatorHandle, PureState
from .integrators import IntegratorConfig, Propagator


@dataclass(frozen=True)
class TrajectoryConfig:
    """Ensemble size, master seed, and jump-time bisection tolerance.

    `jump_resolution` is in the package time unit (1/Omega_gr); rescale it
    when running with omega_gr != 1.
    """

    n_trajectories: int
    master_seed: int
    jump_resolution: float = 1e-6

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValidationError("n_trajectories must be >= 1")
        if self.jump_resolution <= 0:
            raise ValidationError("jump_resolution must be positive")


@dataclass(frozen=True)
class JumpEvent:
    time: float
    channel: int


@dataclass
class TrajectoryResult:
    """Ensemble means with 1-sigma standard errors and per-trajectory jumps."""

    times: np.ndarray
    means: np.ndarray  # (n_times, n_observables)
    stderrs: np.ndarray  # (n_times, n_observables)
    jump_records: list = field(default_factory=list)  # list per trajectory

    @property
    def n_trajectories(self) -> int:
        return len(self.jump_records)


def effective_hamiltonian_matrix(h: OperatorHandle, jumps):
    """Sparse H - (i/2) sum L^dag L."""
    heff = h.matrix.astype(complex)
    for op in jumps:
        heff = heff - 0.5j * (op.matrix.conjugate().T @ op.matrix)
    return heff.tocsr()


def _select_channel(rng, weights):
    total = weights.sum()
    if total <= 0.0:
        raise TrajectoryError(
            "jump required but all channel weights vanish",
            diagnostic={"weights": weights.tolist()},
        )
    cum = np.cumsum(weights)
    return int(np.searchsorted(cum, rng.random() * total, side="right"))


def _run_single(
    index,
    seed_seq,
    psi0,
    prop,
    jump_mats,
    grid,
    obs_mats,
    jump_resolution,
):
    rng = np.random.default_rng(seed_seq)
    psi = psi0.copy()
    threshold = rng.random()
    events = []
    obs = np.empty((len(grid), len(obs_mats)))

    def record(i, vec):
        nrm2 = np.real(np.vdot(vec, vec))
        for k, mat in enumerate(obs_mats):
            obs[i, k] = np.real(np.vdot(vec, mat @ vec)) / nrm2

    record(0, psi)
    for i in range(1, len(grid)):
        t_cur = grid[i - 1]
        while t_cur < grid[i]:
            cand = prop.step(psi, grid[i] - t_cur)
            if np.real(np.vdot(cand, cand)) >= threshold:
                psi = cand
                t_cur = grid[i]
                break
            # crossing inside (t_cur, grid[i]]: bisect on the monotone norm
            t_lo, psi_lo, t_hi = t_cur, psi, grid[i]
            while t_hi - t_lo > jump_resolution:
                t_mid = 0.5 * (t_lo + t_hi)
                cand = prop.step(psi_lo, t_mid - t_lo)
                if np.real(np.vdot(cand, cand)) >= threshold:
                    t_lo, psi_lo = t_mid, cand
                else:
                    t_hi = t_mid
            weights = np.array(
                [np.real(np.vdot(m @ psi_lo, m @ psi_lo)) for m in jump_mats]
            )
            channel = _select_channel(rng, weights)
            jumped = jump_mats[channel] @ psi_lo
            nrm = np.linalg.norm(jumped)
            if nrm == 0.0:
                raise TrajectoryError(
                    "zero-norm state after jump application",
                    diagnostic={"trajectory": index, "time": t_lo, "channel": channel},
                )
            psi = jumped / nrm
            t_cur = t_lo
            events.append(JumpEvent(time=float(t_lo), channel=channel))
            threshold = rng.random()
        record(i, psi)
    return obs, events


def run_trajectories(
    initial: PureState,
    h: OperatorHandle,
    jumps,
    cfg: IntegratorConfig,
    tcfg: TrajectoryConfig,
    observables,
    workers: int = 1,
) -> TrajectoryResult:
    """Ensemble-averaged observables with quantum-jump sampling.

    Fully deterministic for fixed (master_seed, n_trajectories): per-trajectory
    RNG streams are spawned from the master seed with numpy's SeedSequence and
    results land in preallocated slots, independent of execution order.
    """
    if abs(initial.norm() - 1.0) > 1e-9:
        raise ValidationError("run_trajectories expects a normalized initial state")
    for op in list(jumps) + list(observables):
        if op.space != initial.space:
            raise ValidationError("operator on a different space")
    if h.space != initial.space:
        raise ValidationError("Hamiltonian on a different space")

    heff = effective_hamiltonian_matrix(h, jumps)
    prop = Propagator(cfg, apply_rhs=lambda y: -1j * (heff @ y), hermitian=False)
    jump_mats = [op.matrix for op in jumps]
    obs_mats = [op.matrix for op in observables]
    grid = cfg.output_grid

    seeds = np.random.SeedSequence(tcfg.master_seed).spawn(tcfg.n_trajectories)
    all_obs = np.empty((tcfg.n_trajectories, len(grid), len(obs_mats)))
    all_events: list = [None] * tcfg.n_trajectories

    def task(idx):
        obs, events = _run_single(
            idx,
            seeds[idx],
            initial.amplitudes.astype(complex),
            prop,
            jump_mats,
            grid,
            obs_mats,
            tcfg.jump_resolution,
        )
        all_obs[idx] = obs
        all_events[idx] = events

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(task, range(tcfg.n_trajectories)))
    else:
        for idx in range(tcfg.n_trajectories):
            task(idx)

    means = all_obs.mean(axis=0)
    if tcfg.n_trajectories > 1:
        stderrs = all_obs.std(axis=0, ddof=1) / np.sqrt(tcfg.n_trajectories)
    else:
        stderrs = np.zeros_like(means)
    return TrajectoryResult(
        times=grid.copy(), means=means, stderrs=stderrs, jump_records=all_events
    )
