"""Greedy stepwise antenna selection with per-step transmit-power control.

The loop starts from the strongest antenna, then repeatedly adds the
antenna with the largest measure growth ``Theta`` at the current power,
re-optimizes the power, and stops once the best growth is nonpositive (or
``l_max`` antennas are active).

For one candidate row ``g`` the growth is assembled from the rank-one
precoder update ``(mu, D, b)`` and the cached K x K matrix ``C = H^T A``::

    delta[k, j] = h_k^T d_j + g_k b_j
    eps_k       = |delta_kk|^2 + 2 Re{sqrt(mu) C_kk conj(delta_kk)}
    psi_k       = sum_{j != k} |delta_kj|^2 + 2 Re{sqrt(mu) C_kj conj(delta_kj)}
    theta_k     = 1 + (mu t_k + eps_k) / (1/P + mu u_k + psi_k)
    phi_k       = (1/P + u_k) / (1/P + u_k + t_k)

so that ``R_k(l+1, P) = R_k(l, P) + log2(theta_k phi_k)``. Spectral
efficiency growth is ``mean_k w_k log2(theta_k phi_k)``; energy efficiency
growth is ``(that - q_tx * EE(l, P)) / Q(l+1, P)``.

All candidates of one step are scored in a single vectorized pass.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import metrics
from .channel import ChannelMatrix
from .errors import DegenerateChannelError, ExhaustedError, InvalidArgumentError, NumericalDegeneracyError
from .metrics import LinkStats, Measure, MeasureKind
from .precoders import (
    PrecoderKind,
    PrecoderSpec,
    PrecoderState,
    RankOneUpdate,
    apply_update,
    precode_direct,
    rank_one_update,
    update_terms,
)

__all__ = [
    "AlgoConfig",
    "SelectionState",
    "StepContext",
    "CandidateEval",
    "StepRecord",
    "SelectionResult",
    "initialize",
    "step_context",
    "scan_candidates",
    "candidate_gain",
    "select_next",
    "advance",
    "optimize_power",
    "run",
    "DEFAULT_BOOTSTRAP_LAMBDA",
]

log = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP_LAMBDA = 1e-3
_LN2 = math.log(2.0)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AlgoConfig:
    """Inputs of one selection run.

    ``zf_bootstrap_lambda`` is the RZF regularizer used by ZF while fewer
    than K antennas are active (ZF is undefined there). ``scan`` selects the
    candidate scoring path: ``"rank_one"`` (default) or ``"naive"``, which
    rebuilds the precoder from scratch for every candidate.
    """

    l_max: int
    p_max: float
    precoder: PrecoderSpec
    measure: Measure
    force_full: bool = False
    power_grid: int = 256
    refine_iters: int = 40
    zf_bootstrap_lambda: float = DEFAULT_BOOTSTRAP_LAMBDA
    scan: str = "rank_one"

    def __post_init__(self):
        if int(self.l_max) < 1:
            raise InvalidArgumentError(f"l_max must be >= 1, got {self.l_max}")
        if not (self.p_max > 0 and math.isfinite(self.p_max)):
            raise InvalidArgumentError(f"p_max must be positive and finite, got {self.p_max}")
        if self.power_grid < 2:
            raise InvalidArgumentError("power_grid needs at least 2 points")
        if self.refine_iters < 0:
            raise InvalidArgumentError("refine_iters must be nonnegative")
        if not self.zf_bootstrap_lambda > 0:
            raise InvalidArgumentError("zf_bootstrap_lambda must be positive")
        if self.scan not in ("rank_one", "naive"):
            raise InvalidArgumentError(f"unknown scan path {self.scan!r}")

    def check_channel(self, channel: ChannelMatrix) -> None:
        n, k = channel.n_antennas, channel.n_users
        if self.l_max > n:
            raise InvalidArgumentError(f"l_max={self.l_max} exceeds the {n} available antennas")
        if self.measure.n_users != k:
            raise InvalidArgumentError(f"measure has {self.measure.n_users} weights but the channel has {k} users")
        if self.precoder.kind is PrecoderKind.ZF and self.l_max < k:
            raise InvalidArgumentError(f"ZF needs l_max >= K = {k}, got {self.l_max}")

    def spec_at(self, level: int, n_users: int) -> PrecoderSpec:
        """Precoder used at ``level`` active antennas (ZF bootstraps with RZF)."""
        if self.precoder.kind is PrecoderKind.ZF and level < n_users:
            return PrecoderSpec.rzf(self.zf_bootstrap_lambda)
        return self.precoder


@dataclass
class SelectionState:
    """Running state: selected antennas (1-based), precoder, link caches, power."""

    selected: List[int]
    precoder_state: PrecoderState
    stats: LinkStats
    cross: np.ndarray
    power: float

    @property
    def level(self) -> int:
        return len(self.selected)


@dataclass
class StepContext:
    phi: np.ndarray
    measure_value: float
    q_current: Optional[float]
    power: float


@dataclass
class CandidateEval:
    antenna: int
    update: Optional[RankOneUpdate]
    epsilon: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    gain: float


@dataclass
class StepRecord:
    """One line of the trajectory; the first record is the initialization."""

    level: int
    antenna: int
    gain: Optional[float]
    power: float
    measure: float
    measure_at_prev_power: Optional[float]
    precoder: str


@dataclass
class SelectionResult:
    l_star: int
    p_star: float
    selected: List[int]
    measure_value: float
    trajectory: List[StepRecord]
    stopped: bool
    guard_events: int = 0
    state: Optional[SelectionState] = field(default=None, repr=False)

    def trajectory_jsonl(self) -> str:
        return "".join(json.dumps(asdict(rec)) + "\n" for rec in self.trajectory)

    def write_trajectory(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.trajectory_jsonl())


@dataclass
class ScanResult:
    antennas: np.ndarray
    gains: np.ndarray
    epsilon: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    degenerate: np.ndarray
    guard_events: int
    rank_one: bool = True


# ---------------------------------------------------------------------------
# power search


def _golden_max(f: Callable[[float], float], a: float, b: float, iters: int):
    """Golden-section search for a maximum of ``f`` on ``[a, b]``."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def power_grid(p_max: float, grid: int) -> np.ndarray:
    """``0`` followed by ``grid - 1`` log-spaced points in ``[1e-6 p_max, p_max]``."""
    return np.concatenate(([0.0], np.geomspace(p_max * 1e-6, p_max, grid - 1)))


def optimize_power(measure: Measure, stats: LinkStats, ell: int, p_max: float, grid: int = 256, refine_iters: int = 40) -> float:
    """Maximize the measure over ``P in [0, p_max]``.

    The measure is evaluated on :func:`power_grid`; the best cell (the grid
    neighbours of the best point) is then refined by golden-section search.
    The returned power is never worse than any grid point. Ties go to the
    lowest power.
    """
    if not p_max > 0:
        raise InvalidArgumentError(f"p_max must be positive, got {p_max}")
    ps = power_grid(p_max, grid)
    values = metrics.evaluate(measure, stats, ell, ps)
    i = int(np.argmax(values))
    best_p, best_v = float(ps[i]), float(values[i])
    if refine_iters > 0:
        lo, hi = ps[max(i - 1, 0)], ps[min(i + 1, len(ps) - 1)]
        p_ref, v_ref = _golden_max(metrics.scalar_objective(measure, stats, ell), float(lo), float(hi), refine_iters)
        if v_ref > best_v:
            best_p = float(p_ref)
    return best_p


# ---------------------------------------------------------------------------
# state handling


def _make_state(selected, pstate: PrecoderState, power: float = 0.0) -> SelectionState:
    cross = metrics.cross_gains(pstate.h_matrix, pstate.a_matrix)
    return SelectionState(list(selected), pstate, metrics.stats_from_cross(cross), cross, power)


def initialize(channel: ChannelMatrix, config: AlgoConfig) -> SelectionState:
    """Select the strongest antenna and set the initial power."""
    config.check_channel(channel)
    norms = np.sum(channel.gains.real**2 + channel.gains.imag**2, axis=1)
    first = int(np.argmax(norms))
    if norms[first] == 0:
        raise DegenerateChannelError("all-zero channel: no antenna carries any gain")
    spec = config.spec_at(1, channel.n_users)
    state = _make_state([first + 1], precode_direct(channel.gains[first : first + 1], spec))
    state.power = optimize_power(config.measure, state.stats, 1, config.p_max, config.power_grid, config.refine_iters)
    return state


def step_context(state: SelectionState, config: AlgoConfig) -> StepContext:
    """Quantities that depend only on the current state and power."""
    p = state.power
    t, u = state.stats.t, state.stats.u
    phi = (1.0 + u * p) / (1.0 + (u + t) * p)
    value = metrics.evaluate(config.measure, state.stats, state.level, p)
    q = None
    if config.measure.kind is MeasureKind.EE:
        q = metrics.consumed_power(state.level, p, config.measure.power_model, state.stats.n_users)
    return StepContext(phi, value, q, p)


def _growth(config: AlgoConfig, ctx: StepContext, stats: LinkStats, cross, mu, delta):
    """Vectorized eps, psi, theta and Theta for M candidates.

    ``delta`` is M x K x K, ``mu`` has length M.
    """
    p = ctx.power
    sm = np.sqrt(mu)[:, None, None]
    f = delta.real**2 + delta.imag**2 + 2.0 * (sm * cross[None] * delta.conj()).real
    eps = np.diagonal(f, axis1=1, axis2=2).copy()
    off = f.copy()
    k = cross.shape[0]
    off[:, np.arange(k), np.arange(k)] = 0.0
    psi = off.sum(axis=2)
    t_new = mu[:, None] * stats.t + eps
    u_new = mu[:, None] * stats.u + psi
    sinr_new = t_new * p / (1.0 + u_new * p)
    theta = 1.0 + sinr_new
    # log2(theta phi) taken as a difference of log1p terms: exact when the
    # link is unchanged, and free of the rounding in the product
    bad = ~np.all(sinr_new > -1.0, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr_old = stats.t * p / (1.0 + stats.u * p)
        logs = (np.log1p(np.where(sinr_new > -1.0, sinr_new, 0.0)) - np.log1p(sinr_old)) / _LN2
    measure = config.measure
    gains = logs @ measure.w / measure.n_users
    if measure.kind is MeasureKind.EE:
        gains = (gains - measure.power_model.q_tx * ctx.measure_value) / (ctx.q_current + measure.power_model.q_tx)
    gains = np.where(bad, -np.inf, gains)
    return eps, psi, theta, gains, int(bad.sum())


def _direct_terms(pstate: PrecoderState, g: np.ndarray, cross: np.ndarray):
    """mu and delta recovered from a direct recomputation of the stacked precoder."""
    new = precode_direct(np.vstack([pstate.h_matrix, g]), pstate.spec)
    mu = (new.beta / pstate.beta) ** 2
    new_cross = metrics.cross_gains(new.h_matrix, new.a_matrix)
    return mu, new_cross - math.sqrt(mu) * cross


def scan_candidates(state: SelectionState, ctx: StepContext, channel: ChannelMatrix, config: AlgoConfig, candidates=None) -> ScanResult:
    """Score every candidate antenna (1-based; default: all unselected)."""
    if candidates is None:
        mask = np.ones(channel.n_antennas, dtype=bool)
        mask[np.asarray(state.selected) - 1] = False
        antennas = np.flatnonzero(mask) + 1
    else:
        antennas = np.asarray(candidates, dtype=int).reshape(-1)
    if config.scan == "naive":
        return _scan_naive(state, ctx, channel, config, antennas)

    pstate = state.precoder_state
    g = channel.gains[antennas - 1]
    terms = update_terms(pstate, g)
    # delta[m, k, j] = h_k^T d_j + g_k b_j
    delta = terms.dcross
    mu = terms.mu
    if terms.degenerate.any():
        mu = mu.copy()
        for m in np.flatnonzero(terms.degenerate):
            log.debug("antenna %d: rank-one update degenerate, recomputing directly", antennas[m])
            mu[m], delta[m] = _direct_terms(pstate, g[m], state.cross)
    eps, psi, theta, gains, guards = _growth(config, ctx, state.stats, state.cross, mu, delta)
    return ScanResult(antennas, gains, eps, psi, theta, mu, terms.degenerate, guards)


def _scan_naive(state, ctx, channel, config, antennas) -> ScanResult:
    pstate = state.precoder_state
    m = len(antennas)
    gains = np.empty(m)
    for i, n in enumerate(antennas):
        h = np.vstack([pstate.h_matrix, channel.gains[n - 1]])
        new = precode_direct(h, pstate.spec)
        stats = metrics.link_stats(new.h_matrix, new.a_matrix)
        gains[i] = metrics.evaluate(config.measure, stats, state.level + 1, ctx.power) - ctx.measure_value
    nan = np.full((m, state.stats.n_users), np.nan)
    return ScanResult(antennas, gains, nan, nan, nan, np.full(m, np.nan), np.zeros(m, dtype=bool), 0, rank_one=False)


def _to_eval(state: SelectionState, channel: ChannelMatrix, scan: ScanResult, i: int) -> CandidateEval:
    n = int(scan.antennas[i])
    update = None
    if scan.rank_one and not scan.degenerate[i]:
        update = rank_one_update(state.precoder_state, channel.gains[n - 1])
    return CandidateEval(n, update, scan.epsilon[i], scan.psi[i], scan.theta[i], float(scan.gains[i]))


def candidate_gain(state: SelectionState, ctx: StepContext, n: int, channel: ChannelMatrix, config: AlgoConfig) -> CandidateEval:
    """Evaluate the growth ``Theta`` of adding antenna ``n`` (1-based)."""
    if not 1 <= n <= channel.n_antennas:
        raise InvalidArgumentError(f"antenna index must be in [1, {channel.n_antennas}], got {n}")
    if n in state.selected:
        raise InvalidArgumentError(f"antenna {n} is already selected")
    scan = scan_candidates(state, ctx, channel, config, [n])
    return _to_eval(state, channel, scan, 0)


def _must_grow(state: SelectionState, config: AlgoConfig) -> bool:
    # a ZF result with fewer than K antennas is undefined, so the bootstrap never stops early
    return config.force_full or (
        config.precoder.kind is PrecoderKind.ZF and state.level < state.stats.n_users
    )


def select_next(state: SelectionState, ctx: StepContext, channel: ChannelMatrix, config: AlgoConfig, scan: Optional[ScanResult] = None):
    """Best candidate, or ``None`` when the stopping rule fires.

    Ties go to the lowest antenna index.
    """
    if state.level >= channel.n_antennas:
        raise ExhaustedError("every antenna is already selected")
    if scan is None:
        scan = scan_candidates(state, ctx, channel, config)
    i = int(np.argmax(scan.gains))
    if scan.gains[i] <= 0 and not _must_grow(state, config):
        return None
    return _to_eval(state, channel, scan, i)


def advance(state: SelectionState, best: CandidateEval, channel: ChannelMatrix, config: AlgoConfig) -> SelectionState:
    """Append ``best.antenna``, update the precoder and re-optimize the power."""
    pstate = state.precoder_state
    g = channel.gains[best.antenna - 1]
    level = state.level + 1
    target = config.spec_at(level, channel.n_users)
    if best.update is None or config.scan == "naive" or target != pstate.spec:
        new = precode_direct(np.vstack([pstate.h_matrix, g]), target)
    else:
        try:
            new = apply_update(pstate, g, best.update)
        except NumericalDegeneracyError:
            new = precode_direct(np.vstack([pstate.h_matrix, g]), target)
    nxt = _make_state(state.selected + [best.antenna], new)
    nxt.power = optimize_power(config.measure, nxt.stats, level, config.p_max, config.power_grid, config.refine_iters)
    return nxt


def run(channel: ChannelMatrix, config: AlgoConfig) -> SelectionResult:
    """Run the stepwise selection and return ``L*``, ``P*``, ``S(L*)`` and the trajectory."""
    state = initialize(channel, config)
    ctx = step_context(state, config)
    trajectory = [
        StepRecord(1, state.selected[0], None, state.power, ctx.measure_value, None, str(state.precoder_state.spec))
    ]
    guards = 0
    stopped = False
    while state.level < config.l_max:
        scan = scan_candidates(state, ctx, channel, config)
        guards += scan.guard_events
        best = select_next(state, ctx, channel, config, scan)
        if best is None:
            stopped = True
            break
        used = str(state.precoder_state.spec)
        prev_value = ctx.measure_value
        state = advance(state, best, channel, config)
        ctx = step_context(state, config)
        trajectory.append(
            StepRecord(state.level, best.antenna, best.gain, state.power, ctx.measure_value, prev_value + best.gain, used)
        )
    if guards:
        log.info("%d candidate evaluations hit the nonpositive log guard", guards)
    return SelectionResult(
        l_star=state.level,
        p_star=state.power,
        selected=list(state.selected),
        measure_value=ctx.measure_value,
        trajectory=trajectory,
        stopped=stopped,
        guard_events=guards,
        state=state,
    )
