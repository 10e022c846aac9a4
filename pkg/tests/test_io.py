"""CSV and manifest round trips. Floats are written with 17 significant
digits, so every round trip must be bit exact."""

import json

import numpy as np
import pytest

import spikesde.io as sio
from spikesde.rng import stream
from spikesde.scale_time import BrownianPath, sample_brownian
from spikesde.spike_limit import JumpChain, LimitGraph, sample_Q, sample_spikes
from spikesde.twostate import Path

SEED = 555


def test_path_roundtrip(tmp_path):
    gen = stream(SEED, 0)
    t = np.sort(gen.uniform(0, 3, 64))
    t[0] = 0.0
    p = Path(times=t, values=gen.uniform(0, 1, 64))
    fn = str(tmp_path / "p.csv")
    sio.write_path(fn, p)
    back = sio.read_path(fn)
    assert np.array_equal(back.times, p.times)
    assert np.array_equal(back.values, p.values)


def test_brownian_roundtrip(tmp_path):
    beta = sample_brownian(0.3, 1e-3, 0.25, SEED, traj_index=1)
    fn = str(tmp_path / "b.csv")
    sio.write_brownian(fn, beta)
    back = sio.read_brownian(fn)
    assert back.dt_eff == beta.dt_eff
    assert np.array_equal(back.values, beta.values)


def test_jump_chain_roundtrip(tmp_path):
    chain = sample_Q(1.0, 0.3, 0.5, SEED, traj_index=2, H=30.0)
    fn = str(tmp_path / "c.csv")
    sio.write_jump_chain(fn, chain)
    back = sio.read_jump_chain(fn)
    assert back.initial == chain.initial
    assert back.horizon == chain.horizon
    assert np.array_equal(back.times, chain.times)


def test_spikes_columns(tmp_path):
    chain = sample_Q(1.0, 0.3, 0.5, SEED, traj_index=3, H=30.0)
    spikes = sample_spikes(1.0, 0.3, chain, 1e-2, SEED, traj_index=4)
    fn = str(tmp_path / "s.csv")
    sio.write_spikes(fn, spikes)
    data = np.loadtxt(fn, delimiter=",", skiprows=1, ndmin=2)
    assert data.shape == (spikes.times.size, 3)
    assert np.array_equal(data[:, 0], spikes.times)
    assert np.array_equal(data[:, 1].astype(int), spikes.states)
    assert np.array_equal(data[:, 2], spikes.maxima)


def test_limit_graph_roundtrip(tmp_path):
    chain = JumpChain(initial=0, times=np.array([1.0, 2.0]), horizon=4.0)
    cols = np.array([[0.5, 0.0, 0.4], [1.0, 0.0, 1.0], [2.0, 0.0, 1.0]])
    lg = LimitGraph(chain=chain, columns=cols, H=4.0, epsilon=1e-3,
                    m_min=1e-3)
    fn = str(tmp_path / "g.csv")
    sio.write_limit_graph(fn, lg, delta=1e-2)
    ps = sio.read_limit_graph(fn, delta=1e-2)
    assert ps.H == 4.0
    # degenerate rows become points, interval rows columns
    assert ps.columns.shape[0] == 3
    assert ps.points.shape[0] > 0
    from spikesde.graph_metric import hausdorff, planar_from_limit

    assert hausdorff(ps, planar_from_limit(lg, delta=1e-2)) < 2e-2


def test_matrix_trajectory_format(tmp_path):
    gen = stream(SEED, 5)
    states = gen.normal(size=(3, 2, 2)) + 1j * gen.normal(size=(3, 2, 2))
    times = np.array([0.0, 0.5, 1.0])
    fn = str(tmp_path / "m.csv")
    sio.write_matrix_trajectory(fn, times, states)
    with open(fn) as f:
        header = f.readline().strip()
    assert header == "t,re_00,im_00,re_01,im_01,re_10,im_10,re_11,im_11"
    data = np.loadtxt(fn, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], times)
    re01 = data[:, 3]
    assert np.array_equal(re01, states[:, 0, 1].real)


def test_parse_config_text():
    text = "a = 1\n# comment\n\nb=x y  # trailing\n"
    assert sio.parse_config_text(text) == {"a": "1", "b": "x y"}


def test_parse_config_errors():
    with pytest.raises(ValueError, match="key=value"):
        sio.parse_config_text("just words\n")
    with pytest.raises(ValueError, match="empty key"):
        sio.parse_config_text("=3\n")


def test_manifest_is_deterministic(tmp_path):
    cfg = {"gamma": 10.0, "T": 1.0}
    a = sio.write_manifest(str(tmp_path), "twostate", cfg, 7,
                           ["z.csv", "a.csv"])
    first = open(a, "rb").read()
    sio.write_manifest(str(tmp_path), "twostate", cfg, 7, ["a.csv", "z.csv"])
    assert open(a, "rb").read() == first
    doc = json.loads(first)
    assert sorted(doc) == ["config", "config_sha256", "files", "mode", "seed"]
    assert doc["files"] == ["a.csv", "z.csv"]


def test_write_table(tmp_path):
    fn = str(tmp_path / "t.csv")
    sio.write_table(fn, "a,b", [[1.0, 2.0], [3.0, 0.1]])
    data = np.loadtxt(fn, delimiter=",", skiprows=1)
    assert data.tolist() == [[1.0, 2.0], [3.0, 0.1]]
