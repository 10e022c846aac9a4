"""Limit-object samplers and the band extractor.

Sampled laws are checked against their closed forms (KS and moment
oracles); the extractor is checked on a hand-built path whose spikes,
crossings, and clock times are countable by eye.
"""

import numpy as np
import pytest
from scipy.integrate import quad

import spikesde.spike_limit as sl
from spikesde.scale_time import BrownianPath, mixed_local_time_clock
from spikesde.stats import ks_statistic

SEED = 1618


class TestJumpChain:
    def chain(self):
        return sl.JumpChain(initial=0, times=np.array([1.0, 2.5, 4.0]),
                            horizon=5.0)

    def test_validation(self):
        with pytest.raises(ValueError, match="initial"):
            sl.JumpChain(initial=2, times=np.empty(0), horizon=1.0)
        with pytest.raises(ValueError, match="increasing"):
            sl.JumpChain(initial=0, times=np.array([1.0, 1.0]), horizon=2.0)
        with pytest.raises(ValueError, match="horizon"):
            sl.JumpChain(initial=0, times=np.array([3.0]), horizon=2.0)

    def test_state_alternates(self):
        c = self.chain()
        assert c.state_at(0.5) == 0
        assert c.state_at(1.5) == 1
        assert c.state_at(3.0) == 0
        assert c.state_at(4.5) == 1
        assert c.states.tolist() == [1, 0, 1]

    def test_epochs_partition(self):
        starts, ends, states = self.chain().epochs()
        assert starts.tolist() == [0.0, 1.0, 2.5, 4.0]
        assert ends.tolist() == [1.0, 2.5, 4.0, 5.0]
        assert states.tolist() == [0, 1, 0, 1]

    def test_holding_times_drop_censored_tail(self):
        h0, h1 = self.chain().holding_times()
        assert h0.tolist() == [1.0, 1.5]
        assert h1.tolist() == [1.5]

    def test_state_at_domain(self):
        with pytest.raises(ValueError):
            self.chain().state_at(6.0)


class TestSampleQ:
    def test_exact_jump_count(self):
        c = sl.sample_Q(1.0, 0.3, 0.5, SEED, n_jumps=100)
        assert c.n_jumps() == 100
        assert c.horizon == pytest.approx(c.times[-1])

    def test_horizon_mode(self):
        c = sl.sample_Q(1.0, 0.3, 0.5, SEED, H=50.0)
        assert c.horizon == 50.0
        assert c.times[-1] <= 50.0

    def test_argument_exclusivity(self):
        with pytest.raises(ValueError, match="exactly one"):
            sl.sample_Q(1.0, 0.3, 0.5, SEED)
        with pytest.raises(ValueError, match="exactly one"):
            sl.sample_Q(1.0, 0.3, 0.5, SEED, H=1.0, n_jumps=5)

    def test_initial_state_frequency(self):
        x0 = 0.4
        hits = [sl.sample_Q(1.0, 0.3, x0, SEED, traj_index=k, n_jumps=1).initial
                for k in range(2000)]
        freq = np.mean(hits)
        assert abs(freq - x0) < 3.0 * np.sqrt(x0 * (1 - x0) / 2000)

    def test_holding_means(self):
        lam, p = 2.0, 0.25
        c = sl.sample_Q(lam, p, 0.5, SEED, traj_index=5, n_jumps=4000)
        h0, h1 = c.holding_times()
        assert np.mean(h0) == pytest.approx(1.0 / (lam * p), rel=0.08)
        assert np.mean(h1) == pytest.approx(1.0 / (lam * (1 - p)), rel=0.08)


class TestFirstSpike:
    def test_degenerate_endpoints(self):
        for x0 in (0.0, 1.0):
            fs = sl.sample_first_spike(x0, SEED, n=5)
            assert np.all(fs.q == int(x0))
            assert np.all(fs.y == x0)

    def test_case_frequency(self):
        x0 = 0.4
        fs = sl.sample_first_spike(x0, SEED, traj_index=1, n=20000)
        assert abs(fs.q.mean() - x0) < 3.0 * np.sqrt(x0 * 0.6 / 20000)

    def test_supports(self):
        x0 = 0.4
        fs = sl.sample_first_spike(x0, SEED, traj_index=2, n=5000)
        y1 = fs.y[fs.q == 1]
        y0 = fs.y[fs.q == 0]
        assert y1.min() > 0.0 and y1.max() <= x0
        assert y0.min() >= x0 and y0.max() < 1.0

    def test_conditional_densities_normalize(self):
        x0 = 0.4
        up, _ = quad(lambda y: (1 - x0) / (x0 * (1 - y) ** 2), 0.0, x0)
        dn, _ = quad(lambda y: x0 / ((1 - x0) * y * y), x0, 1.0)
        assert up == pytest.approx(1.0, abs=1e-10)
        assert dn == pytest.approx(1.0, abs=1e-10)

    def test_conditional_laws_ks(self):
        x0 = 0.4
        fs = sl.sample_first_spike(x0, SEED, traj_index=3, n=20000)
        y1 = fs.y[fs.q == 1]
        y0 = fs.y[fs.q == 0]
        ks1 = ks_statistic(y1, lambda v: (1 - x0) * v / (x0 * (1 - v)))
        ks0 = ks_statistic(y0, lambda v: (v - x0) / (v * (1 - x0)))
        assert ks1 < 1.63 / np.sqrt(y1.size) * 1.5
        assert ks0 < 1.63 / np.sqrt(y0.size) * 1.5

    def test_intervals_orientation(self):
        fs = sl.sample_first_spike(0.4, SEED, traj_index=4, n=100)
        iv = fs.intervals()
        assert np.all(iv[fs.q == 1, 1] == 1.0)
        assert np.all(iv[fs.q == 0, 0] == 0.0)


class TestSampleSpikes:
    def decorate(self, m_min=1e-2, lam=1.0, p=0.3, idx=6):
        chain = sl.sample_Q(lam, p, 0.5, SEED, traj_index=idx, H=200.0)
        return chain, sl.sample_spikes(lam, p, chain, m_min, SEED,
                                       traj_index=idx + 1)

    def test_depths_respect_cutoff(self):
        _, spikes = self.decorate()
        assert spikes.maxima.min() >= spikes.m_min
        assert spikes.maxima.max() < 1.0

    def test_times_sit_in_matching_epochs(self):
        chain, spikes = self.decorate()
        assert np.array_equal(chain.state_at(spikes.times), spikes.states)

    def test_count_matches_intensity(self):
        lam, p, m_min = 1.0, 0.3, 1e-2
        chain, spikes = self.decorate(m_min=m_min, lam=lam, p=p)
        _, ends, states = chain.epochs()
        starts = np.concatenate([[0.0], chain.times])
        s0 = float(np.sum((ends - starts)[states == 0]))
        c = 1.0 / m_min - 1.0
        expect = lam * p * s0 * c
        got = int(np.count_nonzero(spikes.states == 0))
        assert abs(got - expect) < 4.0 * np.sqrt(expect)

    def test_tail_law_ks(self):
        _, spikes = self.decorate(idx=8)
        c = 1.0 / spikes.m_min - 1.0
        ks = ks_statistic(spikes.maxima,
                          lambda m: 1.0 - (1.0 / m - 1.0) / c)
        assert ks < 1.63 / np.sqrt(spikes.maxima.size) * 1.5

    def test_near_unit_cutoff_gives_few_spikes(self):
        chain = sl.sample_Q(1.0, 0.3, 0.5, SEED, traj_index=10, H=50.0)
        spikes = sl.sample_spikes(1.0, 0.3, chain, 0.999, SEED, traj_index=11)
        # expected count is lam p S (1/0.999 - 1) ~ 0.015
        assert spikes.times.size <= 2

    def test_columns_orientation(self):
        _, spikes = self.decorate(idx=12)
        cols = spikes.columns()
        up = spikes.states == 0
        assert np.all(cols[up, 1] == 0.0)
        assert np.allclose(cols[up, 2], spikes.maxima[up])
        assert np.all(cols[~up, 2] == 1.0)

    def test_m_min_validation(self):
        chain = sl.sample_Q(1.0, 0.3, 0.5, SEED, traj_index=13, H=1.0)
        with pytest.raises(ValueError, match="m_min"):
            sl.sample_spikes(1.0, 0.3, chain, 1.0, SEED)


def staircase_beta(dt=1e-3):
    """Hand-built path: sit at 0, spike to 0.4, sit, cross to 1, sit,
    spike to 0.3, sit, cross to 0, sit, trailing excursion to 0.2.

    With band half-width 0.01 the code sequence and every extremum are
    exact, so extractor output is fully predictable.
    """
    up = lambda a, b: np.linspace(a, b, 9)[1:-1]  # strictly between bands
    values = np.concatenate([
        np.zeros(5),                    # band 0
        up(0.02, 0.4), [0.4], up(0.4, 0.02),     # spike to 0.4
        np.zeros(4),                    # band 0
        up(0.02, 0.98),                 # crossing
        np.ones(6),                     # band 1
        up(0.98, 0.3), [0.3], up(0.3, 0.98),     # spike down to 0.3
        np.ones(3),                     # band 1
        up(0.98, 0.02),                 # crossing back
        np.zeros(5),                    # band 0
        up(0.02, 0.2), [0.2],           # trailing, unresolved
    ])
    return BrownianPath(dt_eff=dt, values=values)


class TestLimitGraphExtractor:
    LAM, P = 1.0, 0.3

    def graph(self, m_min=1e-3):
        beta = staircase_beta()
        return sl.limit_graph(beta, self.LAM, self.P, m_min=m_min), beta

    def test_chain_structure(self):
        lg, _ = self.graph()
        assert lg.chain.initial == 0
        assert lg.chain.n_jumps() == 2
        assert np.all(np.diff(lg.chain.times) > 0)

    def test_spike_count_and_extents(self):
        lg, _ = self.graph()
        assert lg.n_spikes() == 3
        spans = sorted((lo, hi) for _, lo, hi in lg.columns
                       if not (lo <= 0.0 and hi >= 1.0))
        assert spans == [(0.0, pytest.approx(0.2)),
                         (0.0, pytest.approx(0.4)),
                         (pytest.approx(0.3), 1.0)]

    def test_m_min_filters_small_spikes(self):
        lg, _ = self.graph(m_min=0.5)
        # only the 0.7-deep down spike survives; crossings are kept
        assert lg.n_spikes() == 1
        assert lg.chain.n_jumps() == 2

    def test_clock_times_match_band_occupation(self):
        lg, beta = self.graph()
        clock = mixed_local_time_clock(beta, self.LAM, self.P)
        dt, eps = beta.dt_eff, clock.epsilon
        w0 = dt / (2 * eps * 2 * self.LAM * self.P)
        w1 = dt / (2 * eps * 2 * self.LAM * (1 - self.P))
        # first crossing starts after 9 zero-band samples, second after
        # 9 one-band samples more
        assert lg.chain.times[0] == pytest.approx(9 * w0)
        assert lg.chain.times[1] == pytest.approx(9 * w0 + 9 * w1)
        # the first spike is anchored where it left the band
        up_spike_t = sorted(t for t, lo, hi in lg.columns
                            if hi == pytest.approx(0.4))[0]
        assert up_spike_t == pytest.approx(5 * w0)

    def test_trailing_spike_at_total(self):
        lg, beta = self.graph()
        clock = mixed_local_time_clock(beta, self.LAM, self.P)
        trail = max(lg.columns[:, 0])
        assert trail == pytest.approx(clock.total)

    def test_horizon_validation(self):
        beta = staircase_beta()
        clock = mixed_local_time_clock(beta, self.LAM, self.P)
        with pytest.raises(ValueError, match="exceeds"):
            sl.limit_graph(beta, self.LAM, self.P, H=clock.total * 2)

    def test_mismatched_clock_rejected(self):
        beta = staircase_beta()
        clock = mixed_local_time_clock(beta, self.LAM, self.P, epsilon=0.05)
        with pytest.raises(ValueError, match="band width"):
            sl.limit_graph(beta, self.LAM, self.P, epsilon=0.01, clock=clock)

    def test_path_without_bands_rejected(self):
        beta = BrownianPath(dt_eff=1e-3, values=np.full(50, 0.5))
        with pytest.raises(ValueError, match="never reaches"):
            sl.limit_graph(beta, self.LAM, self.P)

    def test_leading_spike_from_interior_start(self):
        # start away from both bands, resolve into band 1: the leading
        # sojourn becomes the time-zero first spike with the run's min
        values = np.concatenate([
            np.linspace(0.4, 0.98, 8)[:-1], np.ones(5),
        ])
        beta = BrownianPath(dt_eff=1e-3, values=values)
        lg = sl.limit_graph(beta, self.LAM, self.P)
        assert lg.chain.initial == 1
        first = lg.columns[lg.columns[:, 0] == 0.0]
        assert first.shape[0] == 1
        assert first[0, 1] == pytest.approx(0.4)
        assert first[0, 2] == 1.0
