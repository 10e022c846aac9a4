"""Scale function, time change, and local-time machinery.

The scalar SDE of `twostate` can be rebuilt from a single Brownian path
beta: with h the scale function of the diffusion (anchored so that
h(q0) = q0), q_t = h^{-1}(beta_{T_t}) where the real-time clock T is
the inverse of

    Tinv_ell = integral_0^ell phi(beta_u) du,
    phi(a) = 1 / (gamma * (x (1-x) h'(x))^2),  x = h^{-1}(a).

One beta therefore couples every gamma. As gamma grows, phi collapses
onto point masses at 0 and 1 of weights 1/(2 lam p) and
1/(2 lam (1-p)), Tinv approaches the corresponding mix of local times
of beta at levels 0 and 1, and the coupled trajectory approaches a
two-state jump process decorated with instantaneous spikes.

The inner integral of h has the closed form

    F(u) = (1 - 2p) log(u / (1-u)) + p/u + (1-p)/(1-u),

an antiderivative of (u - p) / (u^2 (1-u)^2) obtained by partial
fractions; the test suite validates it against adaptive quadrature
before anything else relies on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .rng import stream
from .twostate import Path, TwoStateParams

__all__ = [
    "ScaleFunction",
    "BrownianPath",
    "TimeChange",
    "MixedClock",
    "ClockExhausted",
    "InsufficientHorizon",
    "inner_exponent",
    "scale",
    "scale_inverse",
    "phi",
    "sample_brownian",
    "time_change_inverse",
    "local_time",
    "mixed_local_time_clock",
    "coupled_trajectory",
    "band_epsilon",
]

# Table domain cut: nodes cover the x range where the inner exponent is
# below EXP_CAP, so h' stays finite in double precision. phi is ~0
# beyond the cut and inverse queries clamp to the boundary node.
EXP_CAP = 600.0

PHI_CAP = 1e12
_LOG_PHI_CAP = np.log(PHI_CAP)

DEFAULT_NODES = 20001

CHUNK = 1 << 22


class ClockExhausted(ValueError):
    """A time change or clock was asked for more real time than the
    underlying effective horizon provides."""

    def __init__(self, requested: float, total: float):
        self.requested = float(requested)
        self.total = float(total)
        super().__init__(
            f"requested real time {requested:g} exceeds the reachable "
            f"total {total:g}; extend the effective horizon"
        )


class InsufficientHorizon(ClockExhausted):
    """coupled_trajectory could not reach the requested horizon."""


def _check_params(params: TwoStateParams) -> None:
    if params.gamma <= 0:
        raise ValueError("scale machinery needs gamma > 0")
    if params.lam <= 0:
        raise ValueError("scale machinery needs lam > 0")
    if not 0.0 < params.p < 1.0:
        raise ValueError("scale machinery needs p strictly inside (0, 1)")


def _F(u, p: float):
    """Antiderivative of (u - p) / (u^2 (1-u)^2) on (0, 1)."""
    u = np.asarray(u, dtype=float)
    return (1.0 - 2.0 * p) * (np.log(u) - np.log1p(-u)) + p / u + (1.0 - p) / (1.0 - u)


def inner_exponent(y, params: TwoStateParams):
    """(2 lam / gamma) * (F(y) - F(p)): the exponent in h'.

    Nonnegative, zero exactly at y = p. Accepts scalars or arrays;
    every entry must lie in (0, 1).
    """
    _check_params(params)
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr <= 0.0) or np.any(y_arr >= 1.0):
        raise ValueError("inner_exponent needs y in (0, 1)")
    out = (2.0 * params.lam / params.gamma) * (_F(y_arr, params.p) - _F(params.p, params.p))
    out = np.maximum(out, 0.0)
    return float(out) if np.isscalar(y) else out


def _exp_domain_cut(params: TwoStateParams) -> tuple[float, float]:
    """x range on which the inner exponent stays below EXP_CAP."""
    from scipy.optimize import brentq

    p = params.p

    def g(x):
        return inner_exponent(x, params) - EXP_CAP

    lo = p
    while g(lo) < 0 and lo > 1e-300:
        lo *= 0.5
    hi = p
    gap = 1.0 - p
    while inner_exponent(1.0 - gap, params) < EXP_CAP and gap > 1e-300:
        gap *= 0.5
    x_lo = brentq(g, lo, p) if lo < p else p
    x_hi = brentq(g, p, 1.0 - gap) if gap < 1.0 - p else p
    return float(x_lo), float(x_hi)


class ScaleFunction:
    """h anchored at q0 (h(q0) = q0), with its derivative and inverse.

    h(x) = q0 + integral from q0 to x of exp(inner_exponent). The
    integral is accumulated by composite Simpson on a logistic-graded
    node table (dense near 0 and 1, where h' varies fastest); point
    evaluations add a partial Simpson panel from the nearest node, so
    values at nodes are exact relative to the table and everything is
    vectorized. The inverse interpolates the monotone table and applies
    Newton polish where h' is moderate.
    """

    def __init__(self, params: TwoStateParams, q0: float,
                 nodes: int = DEFAULT_NODES):
        _check_params(params)
        if not 0.0 < q0 < 1.0:
            raise ValueError("q0 must lie in (0, 1)")
        self.params = params
        self.q0 = float(q0)
        x_lo, x_hi = _exp_domain_cut(params)
        s = np.linspace(np.log(x_lo / (1.0 - x_lo)),
                        np.log(x_hi / (1.0 - x_hi)), nodes)
        xs = 1.0 / (1.0 + np.exp(-s))
        xs = np.unique(np.concatenate([xs, [self.q0, params.p]]))
        mids = 0.5 * (xs[:-1] + xs[1:])
        hp = self._hp(xs)
        hpm = self._hp(mids)
        dx = np.diff(xs)
        panels = dx / 6.0 * (hp[:-1] + 4.0 * hpm + hp[1:])
        # accumulate outward from q0: panels grow toward the tails, so
        # no increment is ever absorbed and the table stays strictly
        # monotone even when the tails reach 1e250
        i0 = int(np.searchsorted(xs, self.q0))
        hs = np.empty_like(xs)
        hs[i0] = self.q0
        hs[i0 + 1:] = self.q0 + np.cumsum(panels[i0:])
        hs[:i0] = self.q0 - np.cumsum(panels[:i0][::-1])[::-1]
        if not np.all(np.diff(hs) > 0):
            raise RuntimeError("scale table lost monotonicity")
        self.xs = xs
        self.hs = hs

    def _inner(self, x):
        lam, g, p = self.params.lam, self.params.gamma, self.params.p
        x = np.asarray(x, dtype=float)
        val = (2.0 * lam / g) * (_F(x, p) - _F(p, p))
        return np.maximum(val, 0.0)

    def _hp(self, x):
        return np.exp(np.minimum(self._inner(x), 700.0))

    def derivative(self, x):
        """h'(x) = exp(inner_exponent(x)); >= 1, equal to 1 at x = p."""
        return self._hp(x)

    def __call__(self, x):
        x_in = np.asarray(x, dtype=float)
        xc = np.clip(x_in, self.xs[0], self.xs[-1])
        j = np.clip(np.searchsorted(self.xs, xc, side="right") - 1,
                    0, self.xs.size - 2)
        a = self.xs[j]
        d = xc - a
        mid = a + 0.5 * d
        val = self.hs[j] + d / 6.0 * (
            self._hp(a) + 4.0 * self._hp(mid) + self._hp(xc))
        return float(val) if np.isscalar(x) else val

    def inverse(self, y, refine: bool = True):
        """Monotone inverse, mapping any real into the table's x range."""
        y_in = np.asarray(y, dtype=float)
        j = np.clip(np.searchsorted(self.hs, y_in) - 1, 0, self.hs.size - 2)
        y0 = self.hs[j]
        dy = self.hs[j + 1] - y0
        frac = np.clip((y_in - y0) / dy, 0.0, 1.0)
        x = self.xs[j] + frac * (self.xs[j + 1] - self.xs[j])
        if refine:
            # Newton stays well conditioned at huge h': the step just
            # shrinks, so polish everywhere
            for _ in range(2):
                step = (self(x) - y_in) / self._hp(x)
                x = np.clip(x - step, self.xs[0], self.xs[-1])
        return float(x) if np.isscalar(y) else x

    def phi(self, a, counted: bool = False):
        """phi at level a, evaluated in log space and capped at 1e12.

        With counted=True returns (values, number of capped entries).
        """
        a_in = np.asarray(a, dtype=float)
        x = self.inverse(a_in, refine=False)
        x = np.asarray(x, dtype=float)
        logphi = -np.log(self.params.gamma) - 2.0 * (
            np.log(x) + np.log1p(-x) + self._inner(x))
        capped = int(np.count_nonzero(logphi > _LOG_PHI_CAP))
        if capped:
            logphi = np.minimum(logphi, _LOG_PHI_CAP)
        out = np.exp(logphi)
        if not np.all(np.isfinite(out)):
            bad = int(np.flatnonzero(~np.isfinite(out))[0])
            raise FloatingPointError(
                f"phi overflowed at entry {bad} (level {a_in.flat[bad]!r}); "
                "dt_eff is too coarse near the boundaries")
        if np.isscalar(a):
            out = float(out)
        return (out, capped) if counted else out


@lru_cache(maxsize=8)
def _cached_scale(params: TwoStateParams, q0: float, nodes: int) -> ScaleFunction:
    return ScaleFunction(params, q0, nodes)


def scale(x, params: TwoStateParams, q0: float):
    """h(x) for x in (0, 1), anchored at h(q0) = q0."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0.0) or np.any(x_arr >= 1.0):
        raise ValueError("scale needs x in (0, 1)")
    return _cached_scale(params, float(q0), DEFAULT_NODES)(x)

def scale_inverse(y: float, params: TwoStateParams, q0: float) -> float:
    """Inverse of scale by monotone bisection (bracket width 1e-12)."""
    sf = _cached_scale(params, float(q0), DEFAULT_NODES)
    lo, hi = sf.xs[0], sf.xs[-1]
    if y <= sf.hs[0]:
        return float(lo)
    if y >= sf.hs[-1]:
        return float(hi)
    for _ in range(200):
        if hi - lo <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if sf(mid) < y:
            lo = mid
        else:
            hi = mid
    else:
        raise RuntimeError(
            f"bisection failed to converge on bracket [{lo}, {hi}]")
    return 0.5 * (lo + hi)


def phi(a, params: TwoStateParams, q0: float | None = None):
    """Time-change density at level a.

    The anchor q0 defaults to p; any fixed interior anchor gives the
    same weak limit (point masses 1/(2 lam p) at 0 and
    1/(2 lam (1-p)) at 1).
    """
    if q0 is None:
        q0 = params.p
    return _cached_scale(params, float(q0), DEFAULT_NODES).phi(a)


@dataclass
class BrownianPath:
    """Uniform-grid Brownian samples in effective time."""

    dt_eff: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("values must be a nonempty 1-d array")
        if self.dt_eff <= 0:
            raise ValueError("dt_eff must be positive")

    @property
    def x0(self) -> float:
        return float(self.values[0])

    @property
    def L(self) -> float:
        return (self.values.size - 1) * self.dt_eff

    def __len__(self) -> int:
        return self.values.size


def sample_brownian(x0: float, dt_eff: float, L: float, seed: int,
                    traj_index: int = 0) -> BrownianPath:
    """Brownian path from x0 on a uniform effective-time grid [0, L]."""
    n = int(round(L / dt_eff))
    values = np.empty(n + 1)
    values[0] = x0
    rng = stream(seed, traj_index)
    sq = np.sqrt(dt_eff)
    done = 0
    level = x0
    while done < n:
        m = min(CHUNK, n - done)
        inc = rng.standard_normal(m)
        inc *= sq
        np.cumsum(inc, out=inc)
        inc += level
        values[done + 1:done + m + 1] = inc
        level = values[done + m]
        done += m
    return BrownianPath(dt_eff=dt_eff, values=values)


def band_epsilon(dt_eff: float) -> float:
    """Default local-time band half-width: max(sqrt(dt_eff), 1e-4)."""
    return max(np.sqrt(dt_eff), 1e-4)


@dataclass
class TimeChange:
    """Cumulative real time Tinv_ell along an effective-time grid."""

    dt_eff: float
    Tinv: np.ndarray
    capped: int = 0

    @property
    def ell_grid(self) -> np.ndarray:
        return np.arange(self.Tinv.size) * self.dt_eff

    @property
    def total(self) -> float:
        return float(self.Tinv[-1])

    def invert(self, t):
        """Effective time ell at which Tinv first reaches t (linear
        interpolation between grid points; monotone)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr > self.Tinv[-1]):
            raise ClockExhausted(float(np.max(t_arr)), self.total)
        ell = np.interp(t_arr, self.Tinv, self.ell_grid)
        return float(ell) if np.isscalar(t) else ell


def time_change_inverse(beta: BrownianPath, scale_fn: ScaleFunction) -> TimeChange:
    """Trapezoid integral of phi along beta: Tinv[0] = 0, nondecreasing.

    phi values are capped at 1e12 (the count is reported on the result);
    a non-finite phi raises with the offending grid index.
    """
    n = beta.values.size
    tinv = np.empty(n)
    tinv[0] = 0.0
    dt = beta.dt_eff
    total = 0.0
    capped = 0
    prev_phi = None
    for start in range(0, n, CHUNK):
        seg = beta.values[start:start + CHUNK]
        try:
            ph, c = scale_fn.phi(seg, counted=True)
        except FloatingPointError as e:
            raise FloatingPointError(f"{e} (chunk offset {start})") from None
        capped += c
        if start == 0:
            mids = 0.5 * (ph[:-1] + ph[1:])
            out = np.cumsum(mids) * dt
            tinv[1:seg.size] = out
        else:
            full = np.concatenate([[prev_phi], ph])
            mids = 0.5 * (full[:-1] + full[1:])
            out = np.cumsum(mids) * dt + total
            tinv[start:start + seg.size] = out
        total = tinv[min(start + seg.size, n) - 1]
        prev_phi = ph[-1]
    return TimeChange(dt_eff=dt, Tinv=tinv, capped=capped)


def local_time(beta: BrownianPath, a: float, ell: float | None = None,
               epsilon: float | None = None) -> float:
    """Band estimate of the local time of beta at level a by time ell:
    (1 / 2 eps) * Leb{u < ell : |beta_u - a| < eps} on the grid."""
    if epsilon is None:
        epsilon = band_epsilon(beta.dt_eff)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if ell is None:
        k = beta.values.size - 1
    else:
        k = min(int(round(ell / beta.dt_eff)), beta.values.size - 1)
    count = 0
    for start in range(0, k, CHUNK):
        seg = beta.values[start:min(start + CHUNK, k)]
        count += int(np.count_nonzero(np.abs(seg - a) < epsilon))
    return count * beta.dt_eff / (2.0 * epsilon)


@dataclass
class MixedClock:
    """sigma_t = inf{ell : L0_ell/(2 lam p) + L1_ell/(2 lam (1-p)) > t},
    built from band local-time estimates along the grid.

    A[i] is the weighted band occupation over grid samples u < i, so A
    is flat exactly across excursions of beta away from both bands and
    sigma jumps there.
    """

    dt_eff: float
    epsilon: float
    lam: float
    p: float
    A: np.ndarray

    @property
    def total(self) -> float:
        return float(self.A[-1])

    def sigma(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr >= self.A[-1]):
            raise ClockExhausted(float(np.max(t_arr)), self.total)
        idx = np.searchsorted(self.A, t_arr, side="right")
        out = idx * self.dt_eff
        return float(out) if np.isscalar(t) else out

    def __call__(self, t):
        return self.sigma(t)


def mixed_local_time_clock(beta: BrownianPath, lam: float, p: float,
                           epsilon: float | None = None) -> MixedClock:
    if lam <= 0 or not 0.0 < p < 1.0:
        raise ValueError("need lam > 0 and p in (0, 1)")
    if epsilon is None:
        epsilon = band_epsilon(beta.dt_eff)
    dt = beta.dt_eff
    w0 = dt / (2.0 * epsilon * 2.0 * lam * p)
    w1 = dt / (2.0 * epsilon * 2.0 * lam * (1.0 - p))
    n = beta.values.size
    A = np.empty(n)
    A[0] = 0.0
    total = 0.0
    for start in range(0, n - 1, CHUNK):
        seg = beta.values[start:min(start + CHUNK, n - 1)]
        inc = w0 * (np.abs(seg) < epsilon) + w1 * (np.abs(seg - 1.0) < epsilon)
        np.cumsum(inc, out=inc)
        inc += total
        A[start + 1:start + 1 + seg.size] = inc
        total = A[start + seg.size]
    return MixedClock(dt_eff=dt, epsilon=epsilon, lam=lam, p=p, A=A)


@njit(cache=True)
def _thin_mask(t: np.ndarray, x: np.ndarray, inv_tscale: float, tol: float,
               last_t: float, last_x: float):
    mask = np.zeros(t.size, dtype=np.bool_)
    for i in range(t.size):
        if abs(t[i] - last_t) * inv_tscale >= tol or abs(x[i] - last_x) >= tol:
            mask[i] = True
            last_t = t[i]
            last_x = x[i]
    return mask, last_t, last_x


def _strictly_increasing_times(t: np.ndarray) -> np.ndarray:
    """Resolve ties by bumping each repeat one ulp past its predecessor."""
    m = np.maximum.accumulate(t)
    fresh = np.empty(t.size, dtype=bool)
    fresh[0] = True
    fresh[1:] = m[1:] > m[:-1]
    idx = np.arange(t.size)
    run_start = np.maximum.accumulate(np.where(fresh, idx, 0))
    rank = idx - run_start
    out = m + rank * np.spacing(m)
    if not np.all(out[1:] > out[:-1]):
        for i in range(1, out.size):
            if out[i] <= out[i - 1]:
                out[i] = np.nextafter(out[i - 1], np.inf)
    return out


def coupled_trajectory(beta: BrownianPath, params: TwoStateParams, q0: float,
                       H: float, thin: float | None = None,
                       scale_fn: ScaleFunction | None = None) -> Path:
    """Real-time trajectory on [0, H] driven by one Brownian path.

    Composes x = h^{-1}(beta) with the monotone inversion of the
    time change: sample ell carries real time Tinv_ell and value x_ell.
    The returned Path uses the (strictly increasing) Tinv values as
    times, so spikes survive at full resolution no matter how little
    real time they occupy; the final sample is interpolated to land
    exactly at H.

    thin, if given, drops samples that moved less than thin in the
    normalized box (time scaled by H) since the last kept sample;
    the dropped points stay within ~thin of the kept polyline.

    Raises InsufficientHorizon when the path's total real time is
    below H (the error reports both).
    """
    _check_params(params)
    if H < 0:
        raise ValueError("H must be nonnegative")
    if scale_fn is None:
        scale_fn = ScaleFunction(params, q0)
    if abs(beta.x0 - q0) > 1e-12:
        raise ValueError(f"beta starts at {beta.x0}, expected q0 = {q0}")

    dt = beta.dt_eff
    n = beta.values.size
    keep_t: list[np.ndarray] = []
    keep_x: list[np.ndarray] = []
    total = 0.0
    prev_phi = None
    prev_x = float(q0)
    last_t, last_x = -np.inf, np.inf  # force keeping the first sample
    capped = 0
    inv_h = 1.0 / H if H > 0 else 0.0
    done = False
    for start in range(0, n, CHUNK):
        seg = beta.values[start:start + CHUNK]
        x = np.asarray(scale_fn.inverse(seg, refine=False), dtype=float)
        ph, c = scale_fn.phi(seg, counted=True)
        capped += c
        if start == 0:
            t = np.empty(seg.size)
            t[0] = 0.0
            t[1:] = np.cumsum(0.5 * (ph[:-1] + ph[1:])) * dt
        else:
            full = np.concatenate([[prev_phi], ph])
            t = np.cumsum(0.5 * (full[:-1] + full[1:])) * dt + total
        if t[-1] >= H:
            # cut at the first sample reaching H, interpolating the last
            j = int(np.searchsorted(t, H, side="left"))
            if j == 0:
                t_prev = total if start else 0.0
                frac = (H - t_prev) / (t[0] - t_prev) if t[0] > t_prev else 1.0
                x_h = prev_x + frac * (x[0] - prev_x)
                t, x = np.array([H]), np.array([x_h])
            else:
                frac = (H - t[j - 1]) / (t[j] - t[j - 1]) if t[j] > t[j - 1] else 1.0
                x_h = x[j - 1] + frac * (x[j] - x[j - 1])
                t = np.concatenate([t[:j], [H]])
                x = np.concatenate([x[:j], [x_h]])
            done = True
        else:
            total = float(t[-1])
            prev_phi = float(ph[-1])
            prev_x = float(x[-1])
        if thin is not None and t.size > 0:
            mask, last_t, last_x = _thin_mask(t, x, inv_h, thin, last_t, last_x)
            if done:
                mask[-1] = True
            t, x = t[mask], x[mask]
        keep_t.append(t)
        keep_x.append(x)
        if done:
            break
    if not done:
        raise InsufficientHorizon(H, total)

    times = np.concatenate(keep_t)
    values = np.concatenate(keep_x)
    if times.size == 0 or times[0] > 0.0:
        times = np.concatenate([[0.0], times])
        values = np.concatenate([[q0], values])
    times = _strictly_increasing_times(times)
    return Path(times=times, values=np.clip(values, 0.0, 1.0),
                info={"gamma": params.gamma, "capped": capped, "H": H})
