"""Estimators and test statistics for the limit theorems.

Everything here consumes Path objects (uniform or not) and produces
plain numbers, so the acceptance checks reduce to comparisons against
closed-form targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .twostate import Path

__all__ = [
    "RateEstimate",
    "SpikeCounts",
    "occupation_functional",
    "smooth",
    "estimate_jump_rates",
    "count_spikes",
    "ks_statistic",
]

DEFAULT_THRESHOLD = 0.2
DEFAULT_BASE = 0.05


def occupation_functional(path: Path, f) -> float:
    """Trapezoid quadrature of f(t, x_t) along the path.

    f must accept (times, values) arrays and broadcast; the result is
    linear in f and additive over splits of the time grid. On a
    non-uniform grid this is the change-of-variables integral, so it
    applies unchanged to time-changed trajectories.
    """
    vals = np.asarray(f(path.times, path.values), dtype=float)
    if vals.shape != path.times.shape:
        raise ValueError("f must broadcast over (times, values)")
    return float(np.trapezoid(vals, path.times))


def smooth(path: Path, window: float, mode: str = "moving") -> Path:
    """Average the path over a time window, keeping the grid.

    mode="moving": centered moving average over [t - w/2, t + w/2],
    clipped at the ends (the divisor is the clipped length, so the
    range envelope is preserved). mode="block": the horizon is split
    into consecutive windows and every sample is replaced by its
    block's sample mean.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    t, x = path.times, path.values
    if t.size < 2:
        return Path(times=t.copy(), values=x.copy(), info=dict(path.info))
    if window <= float(np.min(np.diff(t))):
        return Path(times=t.copy(), values=x.copy(), info=dict(path.info))
    if mode == "moving":
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (x[1:] + x[:-1]) * np.diff(t))])
        lo = np.clip(t - 0.5 * window, t[0], t[-1])
        hi = np.clip(t + 0.5 * window, t[0], t[-1])
        c_lo = np.interp(lo, t, cum)
        c_hi = np.interp(hi, t, cum)
        out = (c_hi - c_lo) / (hi - lo)
    elif mode == "block":
        rel = (t - t[0]) / window
        idx = np.minimum(rel.astype(np.int64),
                         int((t[-1] - t[0]) / window))
        sums = np.bincount(idx, weights=x)
        counts = np.bincount(idx)
        out = (sums / counts)[idx]
    else:
        raise ValueError("mode must be 'moving' or 'block'")
    return Path(times=t.copy(), values=np.clip(out, 0.0, 1.0),
                info=dict(path.info))


@dataclass(frozen=True)
class RateEstimate:
    """Empirical jump rates with 3-sigma Poisson half-widths."""

    w01_hat: float
    w10_hat: float
    n01: int
    n10: int
    hw01: float
    hw10: float
    time_at_0: float
    time_at_1: float


def _binarize(values: np.ndarray, threshold: float) -> np.ndarray:
    """Hysteresis state sequence: enter 1 above 1-threshold, enter 0
    below threshold, hold otherwise; -1 while still undecided."""
    marks = np.full(values.size, -1, dtype=np.int8)
    marks[values > 1.0 - threshold] = 1
    marks[values < threshold] = 0
    decided = marks >= 0
    idx = np.where(decided, np.arange(values.size), 0)
    last = np.maximum.accumulate(idx)
    # an undecided prefix keeps last = 0 with marks[0] = -1, so it
    # stays undecided without special casing
    return marks[last]


def estimate_jump_rates(path: Path,
                        threshold: float = DEFAULT_THRESHOLD) -> RateEstimate | None:
    """Jump-rate estimates from a (smoothed) trajectory.

    The path is binarized with a hysteresis band [threshold,
    1 - threshold]; each rate is transitions divided by time spent in
    the source state. Withheld (None) when either transition count is
    zero or a state was never occupied.
    """
    if not 0.0 < threshold < 0.5:
        raise ValueError("threshold must lie in (0, 0.5)")
    t, x = path.times, path.values
    state = _binarize(x, threshold)
    ok = state >= 0
    if not np.any(ok):
        return None
    first = int(np.argmax(ok))
    state = state[first:]
    t = t[first:]
    if t.size < 2:
        return None
    dt = np.diff(t)
    s = state[:-1]
    time0 = float(np.sum(dt[s == 0]))
    time1 = float(np.sum(dt[s == 1]))
    trans = np.diff(state)
    n01 = int(np.count_nonzero(trans == 1))
    n10 = int(np.count_nonzero(trans == -1))
    if n01 == 0 or n10 == 0 or time0 == 0.0 or time1 == 0.0:
        return None
    return RateEstimate(
        w01_hat=n01 / time0,
        w10_hat=n10 / time1,
        n01=n01,
        n10=n10,
        hw01=3.0 * np.sqrt(n01) / time0,
        hw10=3.0 * np.sqrt(n10) / time1,
        time_at_0=time0,
        time_at_1=time1,
    )


@dataclass(frozen=True)
class SpikeCounts:
    """Spike excursion counts per state with the occupation times of
    the base neighborhoods."""

    up: int
    down: int
    time_near_0: float
    time_near_1: float
    m: float
    base: float


def count_spikes(path: Path, m: float, base: float = DEFAULT_BASE) -> SpikeCounts:
    """Count maximal excursions out of the base neighborhoods that
    exceed m but return to the neighborhood they left.

    An excursion from the 0-neighborhood [0, base) counts when its
    maximum reaches m; excursions that continue into the
    1-neighborhood are crossings, not spikes, and are excluded (ones
    from 1 mirror this). A trailing excursion that never resolves
    counts as a spike from the side it left, its extremum deciding
    whether it clears m. Occupation times of the neighborhoods are
    reported for intensity comparisons.
    """
    if not 0.0 < m < 1.0:
        raise ValueError("m must lie in (0, 1)")
    if not 0.0 < base < 0.5:
        raise ValueError("base must lie in (0, 0.5)")
    t, x = path.times, path.values
    code = np.zeros(x.size, dtype=np.int8)
    code[x < base] = 1
    code[x > 1.0 - base] = 2
    starts = np.concatenate([[0], np.flatnonzero(code[1:] != code[:-1]) + 1])
    kinds = code[starts]
    if t.size > 1:
        dt = np.concatenate([np.diff(t), [0.0]])
        near0 = float(np.sum(dt[code == 1]))
        near1 = float(np.sum(dt[code == 2]))
    else:
        near0 = near1 = 0.0
    run_max = np.maximum.reduceat(x, starts)
    run_min = np.minimum.reduceat(x, starts)
    up = down = 0
    for j in np.flatnonzero(kinds == 0):
        prev_kind = kinds[j - 1] if j > 0 else 0
        next_kind = kinds[j + 1] if j + 1 < kinds.size else prev_kind
        if prev_kind == 0:
            continue
        if next_kind != prev_kind:
            continue
        if prev_kind == 1 and run_max[j] >= m:
            up += 1
        elif prev_kind == 2 and run_min[j] <= 1.0 - m:
            down += 1
    return SpikeCounts(up=up, down=down, time_near_0=near0,
                       time_near_1=near1, m=m, base=base)


def ks_statistic(samples, cdf) -> float:
    """sup |empirical CDF - cdf| over the sample points."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("ks_statistic needs samples")
    n = s.size
    model = np.asarray(cdf(s), dtype=float)
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    return float(np.max(np.maximum(np.abs(model - grid_hi),
                                   np.abs(model - grid_lo))))
