"""Occupation functionals, smoothing, rate estimation, spike counting,
and the KS statistic, each against exact synthetic inputs."""

import numpy as np
import pytest

import spikesde.stats as ss
from spikesde.rng import stream
from spikesde.spike_limit import sample_Q
from spikesde.twostate import Path

SEED = 7777


def square_wave(block: float = 1.0, n_blocks: int = 8, dt: float = 1e-2,
                lo: float = 0.05, hi: float = 0.95) -> Path:
    """Alternating lo/hi blocks on a uniform grid, starting at lo."""
    per = int(round(block / dt))
    vals = np.concatenate([
        np.full(per, lo if k % 2 == 0 else hi) for k in range(n_blocks)
    ])
    t = np.arange(vals.size) * dt
    return Path(times=t, values=vals)


class TestOccupationFunctional:
    def test_constant_one_gives_elapsed_time(self):
        path = Path(times=[0.0, 1.0, 3.0], values=[0.2, 0.8, 0.5])
        got = ss.occupation_functional(path, lambda t, x: np.ones_like(t))
        assert got == pytest.approx(3.0)

    def test_linearity(self):
        gen = stream(SEED, 0)
        t = np.sort(gen.uniform(0, 5, 200))
        t[0] = 0.0
        path = Path(times=t, values=gen.uniform(0, 1, 200))
        f = lambda t, x: x
        g = lambda t, x: np.sin(t)
        lhs = ss.occupation_functional(path,
                                       lambda t, x: 2.0 * f(t, x) - 3.0 * g(t, x))
        rhs = (2.0 * ss.occupation_functional(path, f)
               - 3.0 * ss.occupation_functional(path, g))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_nonuniform_grid_change_of_variables(self):
        path = Path(times=[0.0, 0.1, 2.0], values=[0.4, 0.4, 0.4])
        got = ss.occupation_functional(path, lambda t, x: x)
        assert got == pytest.approx(0.4 * 2.0)

    def test_indicator_measures_occupation(self):
        path = square_wave()
        ind = lambda t, x: (x > 0.5).astype(float)
        got = ss.occupation_functional(path, ind)
        # four hi blocks of length 1, trapezoid ramps at the 4 edges
        # contribute half a step each way, net zero
        assert got == pytest.approx(4.0, abs=0.05)

    def test_shape_mismatch_rejected(self):
        path = square_wave()
        with pytest.raises(ValueError, match="broadcast"):
            ss.occupation_functional(path, lambda t, x: 1.0)


class TestSmooth:
    def test_tiny_window_is_identity(self):
        path = square_wave()
        out = ss.smooth(path, window=1e-3)
        assert np.array_equal(out.values, path.values)

    def test_constant_path_unchanged(self):
        t = np.linspace(0, 1, 100)
        path = Path(times=t, values=np.full(100, 0.42))
        for mode in ("moving", "block"):
            out = ss.smooth(path, window=0.2, mode=mode)
            assert np.allclose(out.values, 0.42, atol=1e-12)

    def test_moving_preserves_envelope(self):
        path = square_wave()
        out = ss.smooth(path, window=0.5)
        assert out.values.min() >= path.values.min() - 1e-12
        assert out.values.max() <= path.values.max() + 1e-12

    def test_moving_flattens_fast_oscillation(self):
        t = np.arange(2000) * 1e-3
        vals = 0.5 + 0.4 * np.sign(np.sin(200 * np.pi * t))
        path = Path(times=t, values=vals)
        out = ss.smooth(path, window=0.5)
        inner = out.values[500:-500]
        assert np.abs(inner - 0.5).max() < 0.05

    def test_block_means_exact(self):
        path = square_wave(block=1.0, n_blocks=4, dt=0.25)
        out = ss.smooth(path, window=1.0, mode="block")
        # each block of 4 samples is replaced by its mean
        for k in range(4):
            blk = path.values[4 * k:4 * k + 4]
            assert np.allclose(out.values[4 * k:4 * k + 4], blk.mean())

    def test_validation(self):
        path = square_wave()
        with pytest.raises(ValueError, match="window"):
            ss.smooth(path, window=0.0)
        with pytest.raises(ValueError, match="mode"):
            ss.smooth(path, window=0.5, mode="median")


class TestEstimateJumpRates:
    def test_square_wave_recovers_exact_rates(self):
        path = square_wave(block=2.0, n_blocks=10, dt=1e-2)
        est = ss.estimate_jump_rates(path, threshold=0.2)
        assert est is not None
        assert est.n01 == 5
        assert est.n10 == 4
        # occupation times include the censored final block (one grid
        # interval short of 10 at state 1)
        assert est.time_at_0 == pytest.approx(10.0)
        assert est.time_at_1 == pytest.approx(9.99)
        assert est.w01_hat == pytest.approx(5 / 10.0, rel=1e-9)
        assert est.w10_hat == pytest.approx(4 / 9.99, rel=1e-9)

    def test_withheld_when_no_transitions(self):
        t = np.linspace(0, 1, 50)
        flat = Path(times=t, values=np.full(50, 0.05))
        assert ss.estimate_jump_rates(flat) is None

    def test_withheld_when_never_decided(self):
        t = np.linspace(0, 1, 50)
        mid = Path(times=t, values=np.full(50, 0.5))
        assert ss.estimate_jump_rates(mid) is None

    def test_hysteresis_ignores_band_wiggle(self):
        # values that enter the dead band but never cross it must not
        # create transitions
        t = np.arange(10) * 1.0
        vals = np.array([0.05, 0.4, 0.05, 0.6, 0.05,
                         0.95, 0.4, 0.95, 0.4, 0.05])
        est = ss.estimate_jump_rates(Path(times=t, values=vals),
                                     threshold=0.2)
        assert est is not None
        assert est.n01 == 1 and est.n10 == 1

    def test_threshold_validation(self):
        with pytest.raises(ValueError, match="threshold"):
            ss.estimate_jump_rates(square_wave(), threshold=0.5)

    def test_exact_chain_rates_within_two_percent(self):
        # the estimator itself is unbiased: on a finely sampled exact
        # chain both rates land within 2 percent
        lam, p = 1.0, 0.3
        chain = sample_Q(lam, p, 0.5, SEED, traj_index=4, n_jumps=10_000)
        grid = np.linspace(0.0, chain.horizon, 2_000_000)
        path = Path(times=grid, values=chain.state_at(grid).astype(float))
        est = ss.estimate_jump_rates(path, threshold=0.2)
        assert est is not None
        assert abs(est.w01_hat - lam * p) / (lam * p) < 0.02
        assert abs(est.w10_hat - lam * (1 - p)) / (lam * (1 - p)) < 0.02


class TestCountSpikes:
    def synthetic(self):
        # base 0.05: excursions from 0 to 0.5 and 0.3, one crossing to
        # 1, one excursion from 1 down to 0.35, trailing rise to 0.6
        chunks = [
            np.zeros(3),
            [0.2, 0.5, 0.2],
            np.zeros(2),
            [0.3],
            np.zeros(2),
            np.linspace(0.1, 0.9, 5),
            np.ones(3),
            [0.6, 0.35, 0.6],
            np.ones(2),
            [0.4, 0.6],
        ]
        vals = np.concatenate(chunks)
        return Path(times=np.arange(vals.size) * 0.1, values=vals)

    def test_exact_counts(self):
        path = self.synthetic()
        got = ss.count_spikes(path, m=0.25)
        # up spikes reaching 0.25: the 0.5 and 0.3 excursions; down
        # spikes dipping to 0.75: the 0.35 one, plus the trailing
        # excursion, which counts from the side it left (min 0.4)
        assert got.up == 2
        assert got.down == 2

    def test_threshold_excludes_shallow(self):
        got = ss.count_spikes(self.synthetic(), m=0.45)
        assert got.up == 1   # only the 0.5 excursion
        assert got.down == 2  # dips to 0.35 and (trailing) 0.4

    def test_crossings_not_counted(self):
        got = ss.count_spikes(self.synthetic(), m=0.05)
        # the 0.1 -> 0.9 ramp connects the neighborhoods and is no spike
        assert got.up + got.down == 4

    def test_occupation_times(self):
        got = ss.count_spikes(self.synthetic(), m=0.25)
        assert got.time_near_0 == pytest.approx(0.1 * 7, abs=1e-9)
        assert got.time_near_1 == pytest.approx(0.1 * 5, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError, match="m"):
            ss.count_spikes(self.synthetic(), m=1.0)
        with pytest.raises(ValueError, match="base"):
            ss.count_spikes(self.synthetic(), m=0.5, base=0.5)


class TestKsStatistic:
    def test_exact_small_sample(self):
        got = ss.ks_statistic([0.25], lambda s: np.asarray(s))
        assert got == pytest.approx(0.75)

    def test_uniform_sample_is_small(self):
        u = stream(SEED, 4).random(40_000)
        got = ss.ks_statistic(u, lambda s: np.asarray(s))
        assert got < 1.63 / np.sqrt(40_000) * 1.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ss.ks_statistic([], lambda s: np.asarray(s))
