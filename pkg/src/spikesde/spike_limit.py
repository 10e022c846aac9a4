"""Limit objects of the strong-noise regime: jump chain, spikes, graphs.

As gamma grows the scalar trajectory converges to a two-state Markov
chain Q on {0, 1} (rates lam*p for 0 -> 1 and lam*(1-p) for 1 -> 0)
decorated with spikes: instantaneous excursions whose maxima form a
Poisson point process of intensity Leb x dm/m^2. This module samples
those objects directly and also extracts them from a Brownian path,
giving two independent routes to the same law.

The extracted route reads the Brownian path through narrow bands at 0
and 1: maximal sojourns away from both bands are either excursions
(spikes, if the path returns to the band it left) or crossings (jumps
of the chain). Real time is assigned by the mixed local-time clock,
which is flat across every excursion, so each spike is instantaneous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import stream
from .scale_time import BrownianPath, MixedClock, band_epsilon, mixed_local_time_clock

__all__ = [
    "JumpChain",
    "FirstSpikes",
    "SpikeSet",
    "LimitGraph",
    "sample_Q",
    "sample_first_spike",
    "sample_spikes",
    "limit_graph",
]

DEFAULT_M_MIN = 1e-3


@dataclass
class JumpChain:
    """Piecewise-constant path on {0, 1}: starts at `initial`, flips at
    each entry of `times` (strictly increasing), observed up to
    `horizon`."""

    initial: int
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        if self.initial not in (0, 1):
            raise ValueError("initial state must be 0 or 1")
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size and not np.all(np.diff(self.times) > 0):
            raise ValueError("jump times must be strictly increasing")
        if self.times.size and (self.times[0] < 0 or self.times[-1] > self.horizon):
            raise ValueError("jump times must lie in [0, horizon]")

    def state_at(self, t):
        """State at time t (right-continuous)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.horizon):
            raise ValueError("t outside [0, horizon]")
        flips = np.searchsorted(self.times, t_arr, side="right")
        out = (self.initial + flips) % 2
        return int(out) if np.isscalar(t) else out

    @property
    def states(self) -> np.ndarray:
        """State after each jump; alternates away from `initial`."""
        return (self.initial + 1 + np.arange(self.times.size)) % 2

    def epochs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(start, end, state) arrays of the constant segments."""
        bounds = np.concatenate([[0.0], self.times, [self.horizon]])
        states = (self.initial + np.arange(bounds.size - 1)) % 2
        return bounds[:-1], bounds[1:], states

    def holding_times(self) -> tuple[np.ndarray, np.ndarray]:
        """Completed sojourn lengths, split by the state held.

        Includes the initial segment (memorylessness makes it a full
        holding) and drops the censored tail after the last jump.
        Returns (holds at 0, holds at 1).
        """
        if self.times.size == 0:
            return np.empty(0), np.empty(0)
        bounds = np.concatenate([[0.0], self.times])
        holds = np.diff(bounds)
        states = (self.initial + np.arange(holds.size)) % 2
        return holds[states == 0], holds[states == 1]

    def n_jumps(self) -> int:
        return int(self.times.size)


def sample_Q(lam: float, p: float, x0: float, seed: int, traj_index: int = 0,
             H: float | None = None, n_jumps: int | None = None) -> JumpChain:
    """Sample the limit chain: initial state Bernoulli(x0), holdings
    Exp(lam p) at 0 and Exp(lam (1-p)) at 1. Give either a horizon H
    or an exact jump count n_jumps."""
    if lam <= 0 or not 0.0 < p < 1.0:
        raise ValueError("need lam > 0 and p in (0, 1)")
    if not 0.0 <= x0 <= 1.0:
        raise ValueError("x0 must lie in [0, 1]")
    if (H is None) == (n_jumps is None):
        raise ValueError("give exactly one of H, n_jumps")
    rng = stream(seed, traj_index)
    q0 = int(rng.random() < x0)
    scale0 = 1.0 / (lam * p)
    scale1 = 1.0 / (lam * (1.0 - p))

    def draw(n: int) -> np.ndarray:
        # holdings alternate starting from q0
        h = np.empty(n)
        s0 = scale0 if q0 == 0 else scale1
        s1 = scale1 if q0 == 0 else scale0
        h[0::2] = rng.exponential(s0, size=h[0::2].size)
        h[1::2] = rng.exponential(s1, size=h[1::2].size)
        return h

    if n_jumps is not None:
        holds = draw(n_jumps)
        times = np.cumsum(holds)
        return JumpChain(initial=q0, times=times, horizon=float(times[-1]))

    mean_hold = 0.5 * (scale0 + scale1)
    block = max(16, int(3.0 * H / mean_hold) + 16)
    holds = draw(block)
    while holds.sum() < H:
        q_next = (q0 + holds.size) % 2
        extra = np.empty(block)
        s0 = scale0 if q_next == 0 else scale1
        s1 = scale1 if q_next == 0 else scale0
        extra[0::2] = rng.exponential(s0, size=extra[0::2].size)
        extra[1::2] = rng.exponential(s1, size=extra[1::2].size)
        holds = np.concatenate([holds, extra])
    times = np.cumsum(holds)
    times = times[times <= H]
    return JumpChain(initial=q0, times=times, horizon=float(H))


@dataclass
class FirstSpikes:
    """First-spike draws from level x0: q is the state the chain starts
    in (1 with probability x0), y the spike endpoint. For q = 1 the
    spike interval is [y, 1] with y in (0, x0]; for q = 0 it is [0, y]
    with y in [x0, 1)."""

    x0: float
    q: np.ndarray
    y: np.ndarray

    def intervals(self) -> np.ndarray:
        lo = np.where(self.q == 1, self.y, 0.0)
        hi = np.where(self.q == 1, 1.0, self.y)
        return np.column_stack([lo, hi])


def sample_first_spike(x0: float, seed: int, traj_index: int = 0,
                       n: int = 1) -> FirstSpikes:
    """Sample the time-zero spike of the limit started at x0 in [0, 1].

    With probability x0 the driving path reaches 1 first (q = 1) and
    the spike stretches down to the running minimum y, with conditional
    density (1-x0) / (x0 (1-y)^2) on (0, x0]. With probability 1 - x0
    it reaches 0 first (q = 0) and the spike stretches up to y, with
    conditional density x0 / ((1-x0) y^2) on [x0, 1). Both are the
    hitting laws of Brownian extrema and are sampled by inverse CDF.
    For x0 in {0, 1} the spike degenerates to the point {x0}.
    """
    if not 0.0 <= x0 <= 1.0:
        raise ValueError("x0 must lie in [0, 1]")
    if x0 == 0.0 or x0 == 1.0:
        q = np.full(n, int(x0), dtype=np.int64)
        return FirstSpikes(x0=float(x0), q=q, y=np.full(n, float(x0)))
    rng = stream(seed, traj_index)
    hit1 = rng.random(n) < x0
    u = rng.random(n)
    y = np.where(
        hit1,
        u * x0 / ((1.0 - x0) + u * x0),
        x0 / (1.0 - u * (1.0 - x0)),
    )
    return FirstSpikes(x0=float(x0), q=hit1.astype(np.int64), y=y)


@dataclass
class SpikeSet:
    """Poisson spike decoration of a jump chain.

    Each spike is (time, state, depth m): a spike during a state-0
    epoch spans [0, m] upward, one during a state-1 epoch spans
    [1 - m, 1] downward. Depths lie in [m_min, 1).
    """

    m_min: float
    times: np.ndarray
    states: np.ndarray
    maxima: np.ndarray

    def columns(self) -> np.ndarray:
        """(t, lo, hi) rows for the planar graph."""
        lo = np.where(self.states == 0, 0.0, 1.0 - self.maxima)
        hi = np.where(self.states == 0, self.maxima, 1.0)
        return np.column_stack([self.times, lo, hi])

    def count_at_least(self, m: float, state: int | None = None) -> int:
        sel = self.maxima >= m
        if state is not None:
            sel &= self.states == state
        return int(np.count_nonzero(sel))


def sample_spikes(lam: float, p: float, chain: JumpChain, m_min: float,
                  seed: int, traj_index: int = 0) -> SpikeSet:
    """Decorate every epoch of a chain with its spike field.

    Within a state-0 epoch of length s, spikes deeper than m_min arrive
    as Poisson(lam p s (1/m_min - 1)) with iid times uniform on the
    epoch; state-1 epochs mirror with rate lam (1-p). Depths have
    density proportional to 1/m^2 on [m_min, 1), drawn by inverse CDF,
    so P(M >= m) = (1/m - 1)/(1/m_min - 1).
    """
    if not 0.0 < m_min < 1.0:
        raise ValueError("m_min must lie in (0, 1)")
    if lam <= 0 or not 0.0 < p < 1.0:
        raise ValueError("need lam > 0 and p in (0, 1)")
    rng = stream(seed, traj_index)
    c = 1.0 / m_min - 1.0
    starts, ends, states = chain.epochs()
    lengths = ends - starts
    rates = np.where(states == 0, lam * p, lam * (1.0 - p))
    counts = rng.poisson(rates * lengths * c)
    total = int(counts.sum())
    epoch_of = np.repeat(np.arange(starts.size), counts)
    times = starts[epoch_of] + rng.random(total) * lengths[epoch_of]
    spike_states = states[epoch_of]
    maxima = 1.0 / (1.0 + rng.random(total) * c)
    order = np.argsort(times, kind="stable")
    return SpikeSet(m_min=float(m_min), times=times[order],
                    states=spike_states[order], maxima=maxima[order])


@dataclass
class LimitGraph:
    """Planar limit of trajectory graphs: the chain's graph plus
    vertical columns (t, lo, hi) for spikes and crossings."""

    chain: JumpChain
    columns: np.ndarray
    H: float
    epsilon: float
    m_min: float

    def n_spikes(self) -> int:
        # crossings span [0, 1]; everything else is a spike column
        full = (self.columns[:, 1] <= 0.0) & (self.columns[:, 2] >= 1.0)
        return int(np.count_nonzero(~full))


def _runs(codes: np.ndarray) -> np.ndarray:
    """Start indices of maximal constant runs of codes."""
    starts = np.flatnonzero(codes[1:] != codes[:-1]) + 1
    return np.concatenate([[0], starts])


def limit_graph(beta: BrownianPath, lam: float, p: float,
                H: float | None = None, epsilon: float | None = None,
                m_min: float = DEFAULT_M_MIN,
                clock: MixedClock | None = None) -> LimitGraph:
    """Extract the limit graph of a Brownian path read through bands.

    Band sojourns at 0 and 1 define the chain state; each maximal
    sojourn outside both bands is a crossing (column [0, 1] and a jump
    of the chain) when it connects different bands, otherwise a spike
    column up to its extremum, kept when its depth reaches m_min. The
    leading sojourn before any band is the time-zero first spike and is
    always kept. Spike instants come from the mixed local-time clock,
    which is flat across sojourns. A trailing sojourn that never
    returns to a band is kept as a spike from the band it left.
    """
    if epsilon is None:
        epsilon = band_epsilon(beta.dt_eff)
    if clock is None:
        clock = mixed_local_time_clock(beta, lam, p, epsilon=epsilon)
    if clock.epsilon != epsilon:
        raise ValueError("clock was built with a different band width")
    if H is None:
        H = clock.total
    elif H > clock.total:
        raise ValueError(
            f"horizon {H:g} exceeds the clock's reachable total "
            f"{clock.total:g}; extend the effective horizon")

    v = beta.values
    code = np.zeros(v.size, dtype=np.int8)
    chunk = 1 << 22
    for start in range(0, v.size, chunk):
        seg = v[start:start + chunk]
        cseg = code[start:start + chunk]
        cseg[np.abs(seg) < epsilon] = 1
        cseg[np.abs(seg - 1.0) < epsilon] = 2
    rs = _runs(code)
    kinds = code[rs]
    run_max = np.maximum.reduceat(v, rs)
    run_min = np.minimum.reduceat(v, rs)
    # A is indexed so that A[i] covers samples u < i: the real time of
    # everything inside run j is A[rs[j]] up to band width effects
    t_run = clock.A[rs]

    out = np.flatnonzero(kinds == 0)
    cols_t: list[float] = []
    cols_lo: list[float] = []
    cols_hi: list[float] = []
    jump_times: list[float] = []
    initial: int | None = None

    for j in out:
        prev_kind = kinds[j - 1] if j > 0 else 0
        next_kind = kinds[j + 1] if j + 1 < kinds.size else 0
        t = float(t_run[j])
        if t > H:
            continue
        if prev_kind == 0:
            # leading sojourn: the first spike, anchored at t = 0
            if next_kind == 0:
                continue  # no band was ever hit; nothing to anchor
            if next_kind == 2:
                cols_t.append(0.0)
                cols_lo.append(max(float(run_min[j]), 0.0))
                cols_hi.append(1.0)
            else:
                cols_t.append(0.0)
                cols_lo.append(0.0)
                cols_hi.append(min(float(run_max[j]), 1.0))
            continue
        if next_kind == 0:
            # trailing sojourn: unresolved excursion from prev_kind
            if prev_kind == 1:
                m = min(float(run_max[j]), 1.0)
                if m >= m_min:
                    cols_t.append(t)
                    cols_lo.append(0.0)
                    cols_hi.append(m)
            else:
                m = 1.0 - max(float(run_min[j]), 0.0)
                if m >= m_min:
                    cols_t.append(t)
                    cols_lo.append(1.0 - m)
                    cols_hi.append(1.0)
            continue
        if prev_kind != next_kind:
            # crossing: chain jump plus a full column
            cols_t.append(t)
            cols_lo.append(0.0)
            cols_hi.append(1.0)
            jump_times.append(t)
        elif prev_kind == 1:
            m = float(run_max[j])
            if m >= m_min:
                cols_t.append(t)
                cols_lo.append(0.0)
                cols_hi.append(min(m, 1.0))
        else:
            m = 1.0 - float(run_min[j])
            if m >= m_min:
                cols_t.append(t)
                cols_lo.append(max(1.0 - m, 0.0))
                cols_hi.append(1.0)

    band_kinds = kinds[kinds != 0]
    if band_kinds.size == 0:
        raise ValueError("path never reaches a band; no chain to extract")
    initial = 0 if band_kinds[0] == 1 else 1

    jt = np.asarray(jump_times, dtype=float)
    jt = jt[jt <= H]
    # the clock is flat across sojourns, so distinct crossings cannot
    # collide; guard against band-edge pathologies all the same
    keep = np.ones(jt.size, dtype=bool)
    keep[1:] = np.diff(jt) > 0
    jt = jt[keep]
    chain = JumpChain(initial=initial, times=jt, horizon=float(H))
    columns = np.column_stack([
        np.asarray(cols_t), np.asarray(cols_lo), np.asarray(cols_hi),
    ]) if cols_t else np.empty((0, 3))
    return LimitGraph(chain=chain, columns=columns, H=float(H),
                      epsilon=float(epsilon), m_min=float(m_min))
