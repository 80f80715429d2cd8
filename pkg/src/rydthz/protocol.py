"""The detector's four-phase pipeline and derived observables.

initialize -> pi-pulse -> sense -> pi-pulse -> amplify -> measure/analyze.
Sensing happens between |e> and |r> (three-level space); amplification runs
in the two-level {g, r} space, optionally tensored with oscillator modes and
evolved densely, by quantum trajectories, or with TEBD.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    IntegratorConfig,
    TrajectoryConfig,
    evolve_lindblad,
    evolve_pure,
    run_trajectories,
)
from .errors import (
    AnalysisError,
    DimensionError,
    TruncationQualityError,
    ValidationError,
)
from .hilbert import (
    AtomLevels,
    DensityMatrix,
    HilbertSpace,
    PureState,
    basis_state,
    norm_and_normalize,
    product_state,
)
from .model import (
    HamiltonianKind,
    JumpKind,
    ModelParams,
    PhononParams,
    build_hamiltonian,
    build_jump,
    dephasing_jumps,
    signal_operators,
)
from .tebd import (
    TruncationPolicy,
    dense_to_mps,
    expand_with_phonon_vacuum,
    tebd_evolve,
)

SINGLE_PHOTON_WARN = 0.1


class AbsorptionMode(enum.Enum):
    LOCAL_AT_SITE = "local_at_site"
    LOCAL_SAMPLED = "local_sampled"
    COLLECTIVE = "collective"
    MIXED_AVERAGE = "mixed_average"


class Backend(enum.Enum):
    DENSE = "dense"
    TEBD = "tebd"


@dataclass(frozen=True)
class ProtocolConfig:
    """Full configuration of one detector run (times in 1/Omega_gr units)."""

    model: ModelParams
    integrator: IntegratorConfig
    t_amp: float
    t_sense: float = 1.0
    absorption: AbsorptionMode = AbsorptionMode.LOCAL_AT_SITE
    absorption_site: int | None = None
    backend: Backend = Backend.DENSE
    phonons: PhononParams | None = None
    trajectories: TrajectoryConfig | None = None
    truncation: TruncationPolicy | None = None
    omega_ref: float = 1.0

    def __post_init__(self):
        if self.t_amp <= 0:
            raise ValidationError("t_amp must be positive")
        if self.t_sense < 0:
            raise ValidationError("t_sense must be non-negative")
        if self.absorption is AbsorptionMode.LOCAL_AT_SITE:
            k = self.absorption_site
            if k is None or not 0 <= k < self.model.n_sites:
                raise ValidationError("absorption_site out of range")
        if self.backend is Backend.TEBD:
            if self.truncation is None:
                raise ValidationError("the TEBD backend needs a truncation policy")
            if self.model.gamma_deph > 0 or self.trajectories is not None:
                raise ValidationError(
                    "the TEBD backend evolves pure states only (no dephasing, "
                    "no trajectories)"
                )
        if self.model.gamma_thz * self.t_sense > SINGLE_PHOTON_WARN:
            warnings.warn(
                "Gamma_THz * T_s = "
                f"{self.model.gamma_thz * self.t_sense:.3g} leaves the "
                "single-photon sensing regime",
                stacklevel=2,
            )
        grid = self.integrator.output_grid
        if grid[-1] > self.t_amp + 1e-12:
            raise ValidationError("output grid extends past t_amp")


@dataclass(frozen=True)
class AbsorptionRecord:
    """Whether / when / where a THz photon was absorbed during sensing."""

    absorbed: bool
    kind: str
    time: float | None = None
    site: int | None = None


SIGNAL_SITE_TOL = 1e-6
SIGNAL_SUM_TOL = 1e-8


@dataclass
class SignalTrace:
    """S(t) and S_j(t) on a common grid, with run metadata."""

    times: np.ndarray
    s_site: np.ndarray  # (n_times, n_sites)
    metadata: dict = field(default_factory=dict)
    s_total: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.s_site = np.asarray(self.s_site, dtype=float)
        if self.s_site.shape[0] != self.times.size:
            raise DimensionError("site signals do not match the time grid")
        if self.s_site.min() < -SIGNAL_SITE_TOL or self.s_site.max() > 1 + SIGNAL_SITE_TOL:
            raise ValidationError("per-site signal out of [0, 1]")
        self.s_total = self.s_site.sum(axis=1)

    @property
    def n_sites(self) -> int:
        return self.s_site.shape[1]


@dataclass(frozen=True)
class StageDiagnostics:
    """Log-log slope fits of the quadratic and ballistic growth stages."""

    early_slope: float
    early_window: tuple[float, float]
    mid_slope: float
    mid_window: tuple[float, float]
    crossover_time: float


@dataclass(frozen=True)
class AmplificationSummary:
    t_a: float
    s_max: float
    velocity: float
    stage_boundaries: StageDiagnostics


@dataclass
class ProtocolResult:
    trace: SignalTrace
    summary: AmplificationSummary | None
    records: list[AbsorptionRecord]
    analysis_error: str | None = None


# -- protocol stages -----------------------------------------------------------


def pi_pulse(state: PureState, from_level: str, to_level: str) -> PureState:
    """Ideal instantaneous swap |from> <-> |to> on every site (real phases)."""
    space = state.space
    if space.atom_levels is not AtomLevels.GER:
        raise ValidationError("pi pulses act on the three-level (GER) space")
    a = space.atom_levels.level_index(from_level)
    b = space.atom_levels.level_index(to_level)
    if a == b:
        raise ValidationError("pi pulse needs two distinct levels")
    atom_perm = np.arange(space.atom_dim)
    atom_perm[[a, b]] = atom_perm[[b, a]]
    local_perm = np.concatenate(
        [atom_perm + space.atom_dim * ph for ph in range(space.phonon_dim)]
    )
    d, n = space.site_dim, space.n_sites
    amps = state.amplitudes.reshape((d,) * n)
    for axis in range(n):  # swap is an involution: same permutation both ways
        amps = np.take(amps, local_perm, axis=axis)
    return PureState(space, amps.reshape(-1))


def all_ground(space: HilbertSpace) -> PureState:
    return product_state(space, [space.site_ket("g")] * space.n_sites)


def all_sensing(space: HilbertSpace) -> PureState:
    return product_state(space, [space.site_ket("e")] * space.n_sites)


def _check_all_e(state: PureState):
    space = state.space
    probs = np.abs(state.amplitudes) ** 2
    e_idx = space.atom_levels.level_index("e")
    idx = np.arange(space.dim)
    for j in range(space.n_sites):
        atom = (idx // space.site_dim**j) % space.site_dim % space.atom_dim
        outside = probs[atom != e_idx].sum()
        if outside > 1e-9:
            raise ValidationError(
                f"sense() expects the all-|e> state; site {j} carries "
                f"population {outside:.2e} outside |e>"
            )


def sense(state: PureState, cfg: ProtocolConfig, rng) -> list:
    """Sensing window on |Psi_s>; returns [(weight, state, AbsorptionRecord)].

    Deterministic modes apply the normalized jump at t=0 of the window;
    LOCAL_SAMPLED draws the exponential waiting time at total rate N*Gamma
    (the no-jump Hamiltonian is zero, so the norm-decay statistics reduce to
    exactly this law); MIXED_AVERAGE returns the classical ensemble with
    weights 1/N.
    """
    _check_all_e(state)
    params, space = cfg.model, state.space
    n = space.n_sites
    # the normalized conditioned state does not depend on the rate, so the
    # deterministic modes stay defined at Gamma_THz = 0
    unit = params if params.gamma_thz > 0 else replace(params, gamma_thz=1.0)

    def local_jump(k):
        op = build_jump(space, unit, JumpKind.THZ_LOCAL, site=k)
        return norm_and_normalize(op.apply(state))[1]

    mode = cfg.absorption
    if mode is AbsorptionMode.LOCAL_AT_SITE:
        k = cfg.absorption_site
        rec = AbsorptionRecord(True, "local", time=0.0, site=k)
        return [(1.0, local_jump(k), rec)]
    if mode is AbsorptionMode.COLLECTIVE:
        op = build_jump(space, unit, JumpKind.THZ_COLLECTIVE)
        rec = AbsorptionRecord(True, "collective", time=0.0)
        return [(1.0, norm_and_normalize(op.apply(state))[1], rec)]
    if mode is AbsorptionMode.MIXED_AVERAGE:
        return [
            (
                1.0 / n,
                local_jump(k),
                AbsorptionRecord(True, "mixed_component", time=0.0, site=k),
            )
            for k in range(n)
        ]
    # LOCAL_SAMPLED
    total_rate = n * params.gamma_thz
    wait = rng.exponential(1.0 / total_rate) if total_rate > 0 else np.inf
    if wait <= cfg.t_sense:
        k = int(rng.integers(n))  # all channel weights equal on |Psi_s>
        rec = AbsorptionRecord(True, "local_sampled", time=float(wait), site=k)
        return [(1.0, local_jump(k), rec)]
    return [(1.0, state, AbsorptionRecord(False, "none"))]


def restrict_to_gr(state: PureState) -> PureState:
    """Exact restriction of a {g, r}-supported GER state to the GR space."""
    space = state.space
    if space.atom_levels is AtomLevels.GR:
        return state
    if space.has_phonons:
        raise ValidationError("restriction with phonons is not supported")
    gr = HilbertSpace(space.n_sites, AtomLevels.GR, dense_cap=space.dense_cap)
    # GER local levels (g, r) = (0, 2) map onto GR (0, 1)
    level_map = np.array([0, 2])
    idx_gr = np.arange(gr.dim)
    idx_ger = np.zeros(gr.dim, dtype=np.int64)
    for j in range(space.n_sites):
        bits = (idx_gr // 2**j) % 2
        idx_ger += level_map[bits] * 3**j
    amps = state.amplitudes[idx_ger]
    dropped = 1.0 - float(np.real(np.vdot(amps, amps))) / float(
        np.real(np.vdot(state.amplitudes, state.amplitudes))
    )
    if dropped > 1e-9:
        raise ValidationError(
            f"state has weight {dropped:.2e} outside the {{g, r}} manifold"
        )
    return PureState(gr, amps)


def _with_vacuum(state: PureState, phonons: PhononParams | None) -> PureState:
    """Tensor each site with the oscillator vacuum when phonons are enabled."""
    if phonons is None:
        return state
    space = state.space
    target = HilbertSpace(
        space.n_sites, space.atom_levels, phonons.cutoff, dense_cap=space.dense_cap
    )
    target.require_dense()
    amps = np.zeros(target.dim, dtype=complex)
    idx_atom = np.arange(space.dim)
    idx_full = np.zeros(space.dim, dtype=np.int64)
    for j in range(space.n_sites):
        atom_j = (idx_atom // space.atom_dim**j) % space.atom_dim
        idx_full += atom_j * target.site_dim**j  # vacuum: phonon index 0
    amps[idx_full] = state.amplitudes
    return PureState(target, amps)


def _rydberg_site_populations(space: HilbertSpace, probs: np.ndarray) -> np.ndarray:
    """S_j from a (n_times, dim) array of basis probabilities."""
    r_idx = space.atom_levels.level_index("r")
    idx = np.arange(space.dim)
    out = np.empty((probs.shape[0], space.n_sites))
    for j in range(space.n_sites):
        atom = (idx // space.site_dim**j) % space.site_dim % space.atom_dim
        out[:, j] = probs[:, atom == r_idx].sum(axis=1)
    return out


def amplify(state: PureState, cfg: ProtocolConfig) -> SignalTrace:
    """Amplification-mode evolution of a {g, r} state; records S_j(t).

    `state` is the atom-only post-pulse state; the oscillator vacuum is
    tensored in when phonons are configured. Dense evolution adds dephasing
    jumps via Lindblad or trajectories when gamma_deph > 0; the TEBD backend
    covers the pure phonon-coupled case.
    """
    state = restrict_to_gr(state)
    if state.space.n_sites != cfg.model.n_sites:
        raise ValidationError("state size does not match the model")
    grid = cfg.integrator.output_grid
    meta = {
        "backend": cfg.backend.value,
        "n_sites": cfg.model.n_sites,
        "gamma_deph": cfg.model.gamma_deph,
    }

    if cfg.backend is Backend.TEBD:
        mps = dense_to_mps(state, cutoff=0.0)
        if cfg.phonons is not None:
            mps = expand_with_phonon_vacuum(mps, cfg.phonons.cutoff)
        try:
            res = tebd_evolve(
                mps, cfg.model, cfg.phonons, cfg.truncation, cfg.t_amp, grid
            )
        except TruncationQualityError as exc:
            res = exc.result
            trace = _trace_from_tebd(res, meta, flagged=True)
            raise TruncationQualityError(str(exc), result=trace) from None
        return _trace_from_tebd(res, meta, flagged=False)

    full = _with_vacuum(state, cfg.phonons)
    space = full.space
    kind = (
        HamiltonianKind.AMPLIFICATION_PHONON
        if cfg.phonons is not None
        else HamiltonianKind.AMPLIFICATION
    )
    h = build_hamiltonian(space, cfg.model, cfg.phonons, kind)

    if cfg.model.gamma_deph > 0 and cfg.trajectories is not None:
        jumps = dephasing_jumps(space, cfg.model)
        res = run_trajectories(
            full, h, jumps, cfg.integrator, cfg.trajectories, signal_operators(space)
        )
        meta.update(
            evolution="trajectories",
            n_trajectories=cfg.trajectories.n_trajectories,
            master_seed=cfg.trajectories.master_seed,
            stderr_max=float(res.stderrs.max()),
        )
        return SignalTrace(grid.copy(), res.means, meta)

    if cfg.model.gamma_deph > 0:
        jumps = dephasing_jumps(space, cfg.model)
        rho0 = DensityMatrix.from_pure(full)
        out = evolve_lindblad(rho0, h, jumps, cfg.integrator)
        probs = np.stack([np.real(np.diag(rho.matrix)) for _, rho in out])
        meta.update(evolution="lindblad")
        return SignalTrace(grid.copy(), _rydberg_site_populations(space, probs), meta)

    out = evolve_pure(full, h, cfg.integrator)
    probs = np.stack([np.abs(st.amplitudes) ** 2 for _, st in out])
    meta.update(evolution="pure", integrator=cfg.integrator.method.value)
    return SignalTrace(grid.copy(), _rydberg_site_populations(space, probs), meta)


def _trace_from_tebd(res, meta, flagged):
    meta = dict(meta)
    meta.update(
        evolution="tebd",
        discarded_weight=res.total_discarded_weight,
        max_bond_dim=res.max_bond_dim,
        chi_saturated=res.chi_saturated,
        truncation_flagged=flagged,
    )
    if res.phonon_occupation is not None:
        meta["max_phonon_occupation"] = float(res.phonon_occupation.max())
    return SignalTrace(res.times.copy(), res.n_r, meta)


# -- analysis ------------------------------------------------------------------

TURNOVER_FRACTION = 0.98
EARLY_BAND = (0.05, 0.5)  # absolute growth Delta-S counted in atoms
MID_BAND = (0.25, 0.75)  # fraction of the peak growth


def _loglog_slope(t, y):
    if t.size < 4:
        return float("nan"), (float("nan"), float("nan"))
    coef = np.polyfit(np.log(t), np.log(y), 1)
    return float(coef[0]), (float(t[0]), float(t[-1]))


def analyze(trace: SignalTrace, omega_ref: float) -> AmplificationSummary:
    """T_a, S_max, amplification velocity and growth-stage diagnostics.

    T_a is the global argmax of S over the window; the window must contain
    the finite-size turnover (a post-peak decrease of at least 2%). Stage
    slopes are fitted on the growth Delta-S = S - S(0) in log-log scale.
    """
    s, t = trace.s_total, trace.times
    m = int(np.argmax(s))
    if m == 0 or not np.any(s[m:] <= TURNOVER_FRACTION * s[m]):
        raise AnalysisError(
            "no finite-size turnover in the simulated window (horizon too short)"
        )
    t_a, s_max = float(t[m]), float(s[m])
    velocity = s_max / (omega_ref * t_a)

    growth = s - s[0]
    valid = (growth > 0) & (t > 0) & (np.arange(t.size) <= m)
    early = valid & (growth >= EARLY_BAND[0]) & (growth <= EARLY_BAND[1])
    peak_growth = growth[m]
    mid = (
        valid
        & (growth >= MID_BAND[0] * peak_growth)
        & (growth <= MID_BAND[1] * peak_growth)
    )
    early_slope, early_win = _loglog_slope(t[early], growth[early])
    mid_slope, mid_win = _loglog_slope(t[mid], growth[mid])

    crossover = float("nan")
    if np.isfinite(early_slope) and np.isfinite(mid_slope) and early_slope != mid_slope:
        a1 = np.mean(np.log(growth[early]) - early_slope * np.log(t[early]))
        a2 = np.mean(np.log(growth[mid]) - mid_slope * np.log(t[mid]))
        crossover = float(np.exp((a2 - a1) / (early_slope - mid_slope)))

    return AmplificationSummary(
        t_a=t_a,
        s_max=s_max,
        velocity=velocity,
        stage_boundaries=StageDiagnostics(
            early_slope=early_slope,
            early_window=early_win,
            mid_slope=mid_slope,
            mid_window=mid_win,
            crossover_time=crossover,
        ),
    )


def mixed_average_trace(weighted_traces) -> SignalTrace:
    """Pointwise weighted average of traces on a common grid."""
    weighted_traces = list(weighted_traces)
    if not weighted_traces:
        raise ValidationError("nothing to average")
    weights = np.array([w for w, _ in weighted_traces], dtype=float)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValidationError("weights must sum to 1")
    ref = weighted_traces[0][1]
    for _, tr in weighted_traces[1:]:
        if not np.array_equal(tr.times, ref.times):
            raise ValidationError("traces live on different grids")
        if tr.n_sites != ref.n_sites:
            raise ValidationError("traces have different site counts")
    s_site = sum(w * tr.s_site for w, tr in weighted_traces)
    meta = dict(ref.metadata)
    meta.update(kind="mixed_average", n_components=len(weighted_traces))
    return SignalTrace(ref.times.copy(), s_site, meta)


# -- full pipeline ---------------------------------------------------------------


def _sense_outcomes_gr(cfg: ProtocolConfig, rng) -> list:
    """Post-sensing, post-pulse {g, r} states.

    When the three-level space fits the dense cap this runs the literal
    pipeline |Psi_g> -> pi(g,e) -> sense -> pi(e,g) -> restriction. Beyond
    the cap the closed-form outcomes are built directly in the two-level
    space (identical states and statistics: sensing evolves under H = 0).
    """
    n = cfg.model.n_sites
    ger = HilbertSpace(n, AtomLevels.GER)
    if ger.dim <= ger.dense_cap:
        psi_g = all_ground(ger)
        psi_s = pi_pulse(psi_g, "g", "e")
        outcomes = sense(psi_s, cfg, rng)
        return [
            (w, restrict_to_gr(pi_pulse(st, "e", "g")), rec)
            for w, st, rec in outcomes
        ]

    gr = HilbertSpace(n, AtomLevels.GR)
    gr.require_dense()

    def one_r(k):
        return basis_state(gr, [1 if j == k else 0 for j in range(n)])

    mode = cfg.absorption
    if mode is AbsorptionMode.LOCAL_AT_SITE:
        k = cfg.absorption_site
        return [(1.0, one_r(k), AbsorptionRecord(True, "local", 0.0, k))]
    if mode is AbsorptionMode.COLLECTIVE:
        amps = sum(one_r(k).amplitudes for k in range(n)) / np.sqrt(n)
        return [(1.0, PureState(gr, amps), AbsorptionRecord(True, "collective", 0.0))]
    if mode is AbsorptionMode.MIXED_AVERAGE:
        return [
            (1.0 / n, one_r(k), AbsorptionRecord(True, "mixed_component", 0.0, k))
            for k in range(n)
        ]
    total_rate = n * cfg.model.gamma_thz
    wait = rng.exponential(1.0 / total_rate) if total_rate > 0 else np.inf
    if wait <= cfg.t_sense:
        k = int(rng.integers(n))
        return [(1.0, one_r(k), AbsorptionRecord(True, "local_sampled", float(wait), k))]
    return [(1.0, all_ground(gr), AbsorptionRecord(False, "none"))]


def run_protocol(cfg: ProtocolConfig, rng=None) -> ProtocolResult:
    """Compose the full detector cycle and analyze the resulting trace.

    Traces without a finite-size turnover (e.g. Omega = 0 or no absorption)
    yield summary = None with the analysis error recorded.
    """
    rng = np.random.default_rng(rng)
    outcomes = _sense_outcomes_gr(cfg, rng)
    records = [rec for _, _, rec in outcomes]

    flagged = None
    traces = []
    for w, st, _rec in outcomes:
        try:
            traces.append((w, amplify(st, cfg)))
        except TruncationQualityError as exc:
            traces.append((w, exc.result))
            flagged = str(exc)
    trace = traces[0][1] if len(traces) == 1 else mixed_average_trace(traces)
    trace.metadata["absorption"] = cfg.absorption.value

    summary, err = None, None
    try:
        summary = analyze(trace, cfg.omega_ref)
    except AnalysisError as exc:
        err = str(exc)
    result = ProtocolResult(trace, summary, records, analysis_error=err)
    if flagged is not None:
        raise TruncationQualityError(flagged, result=result)
    return result
