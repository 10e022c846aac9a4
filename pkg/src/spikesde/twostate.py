"""Scalar population SDE for a two-level system.

    dq_t = -lam (q_t - p) dt + sqrt(gamma) q_t (1 - q_t) dW_t

q is the excited-state population, p the stationary mean of the jump
part, lam the total jump rate and gamma the (model) measurement
strength. Large gamma drives q toward the ends of [0, 1] with rare
excursions; the companion modules analyze that limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .rng import stream

__all__ = ["TwoStateParams", "Path", "em_step", "simulate"]

DEFAULT_LAM = 1.0
DEFAULT_P = 0.3

# Effective dt never exceeds STEP_BUDGET / gamma (same policy as the
# matrix stepper).
STEP_BUDGET = 0.01

VALUE_TOL = 1e-12


@dataclass(frozen=True)
class TwoStateParams:
    """Parameters (lam, p, gamma) of the scalar model.

    gamma here is the model value: reducing a physical two-level model
    multiplies the physical measurement strength by 4 (see
    belavkin.reduce_two_state).
    """

    gamma: float
    lam: float = DEFAULT_LAM
    p: float = DEFAULT_P

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass
class Path:
    """Sampled scalar trajectory, uniform grid or not.

    times must be strictly increasing; values stay within [0, 1] up to
    a 1e-12 slack. clamps counts boundary clamps applied while the path
    was generated; info carries optional producer diagnostics.
    """

    times: np.ndarray
    values: np.ndarray
    clamps: int = 0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if self.times.size == 0:
            raise ValueError("empty path")
        if self.times.size > 1 and not _strictly_increasing(self.times):
            raise ValueError("times must be strictly increasing")
        lo = self.values.min()
        hi = self.values.max()
        if lo < -VALUE_TOL or hi > 1.0 + VALUE_TOL:
            raise ValueError(f"values outside [0, 1]: range [{lo}, {hi}]")

    def __len__(self) -> int:
        return self.times.size


def _strictly_increasing(t: np.ndarray) -> bool:
    # chunked so 1e8-sample paths do not allocate a full diff
    step = 1 << 22
    for i in range(0, t.size - 1, step):
        seg = t[i:i + step + 1]
        if not np.all(seg[1:] > seg[:-1]):
            return False
    return True


def em_step(params: TwoStateParams, q: float, dt: float, dW: float) -> tuple[float, bool]:
    """One Euler-Maruyama update, clamped to [0, 1].

    Returns (new value, whether the clamp fired).
    """
    out = q - params.lam * (q - params.p) * dt \
        + np.sqrt(params.gamma) * q * (1.0 - q) * dW
    if out < 0.0:
        return 0.0, True
    if out > 1.0:
        return 1.0, True
    return float(out), False


@njit(cache=True)
def _em_chunk(q0: float, dw: np.ndarray, lam: float, p: float,
              sqg: float, dt: float):
    out = np.empty(dw.size)
    q = q0
    clamps = 0
    for i in range(dw.size):
        q = q + lam * (p - q) * dt + sqg * q * (1.0 - q) * dw[i]
        if q < 0.0:
            q = 0.0
            clamps += 1
        elif q > 1.0:
            q = 1.0
            clamps += 1
        out[i] = q
    return out, clamps


def simulate(params: TwoStateParams, q0: float, dt: float, T: float,
             seed: int, stride: int = 1, traj_index: int = 0) -> Path:
    """Simulate on [0, T] with the (seed, traj_index) Brownian stream.

    The effective step is min(dt, 0.01 / gamma); every stride-th sample
    is retained (the initial condition always is). T = 0 yields the
    single-sample path [q0].
    """
    if not 0.0 <= q0 <= 1.0:
        raise ValueError("q0 must lie in [0, 1]")
    dt_eff = min(dt, STEP_BUDGET / params.gamma) if params.gamma > 0 else dt
    n_steps = int(round(T / dt_eff))
    rng = stream(seed, traj_index)
    sqg = np.sqrt(params.gamma)
    sq_dt = np.sqrt(dt_eff)

    kept = np.empty(n_steps // stride + 1)
    kept[0] = q0
    n_kept = 1
    clamps = 0
    q = q0
    chunk = 1 << 20
    done = 0
    while done < n_steps:
        m = min(chunk, n_steps - done)
        dw = rng.standard_normal(m) * sq_dt
        seg, c = _em_chunk(q, dw, params.lam, params.p, sqg, dt_eff)
        clamps += c
        q = seg[-1]
        # global step indices done+1 .. done+m; keep multiples of stride
        first = stride - (done % stride)  # 1-based offset of first kept in seg
        sel = seg[first - 1::stride]
        kept[n_kept:n_kept + sel.size] = sel
        n_kept += sel.size
        done += m

    times = np.arange(n_kept) * (dt_eff * stride)
    return Path(times=times, values=kept[:n_kept], clamps=clamps,
                info={"dt": dt_eff, "seed": seed, "traj_index": traj_index})
