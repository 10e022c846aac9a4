"""CSV and config persistence.

All floats are written with repr-faithful precision (17 significant
digits) so a rerun with the same seed reproduces files byte for byte.
Schemas, one per object kind:

    Path CSV        t,q
    BrownianPath    ell,beta            (header carries dt_eff)
    TimeChange      ell,t_real
    JumpChain       t,state             (row per jump; t=0 row first)
    SpikeSet        t,state,m
    LimitGraph      t,y_low,y_high      (chain rows have y_low == y_high)
    matrix traj     t,re_ij,im_ij,...   (column per entry)

Config files are flat key=value lines; '#' starts a comment.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .twostate import Path

__all__ = [
    "write_path",
    "read_path",
    "write_brownian",
    "read_brownian",
    "write_time_change",
    "write_jump_chain",
    "read_jump_chain",
    "write_spikes",
    "write_limit_graph",
    "read_limit_graph",
    "write_matrix_trajectory",
    "write_table",
    "parse_config_text",
    "read_config",
    "write_manifest",
]

FMT = "%.17g"


def _write_rows(path: str, header: str, columns: list[np.ndarray]) -> None:
    data = np.column_stack(columns)
    np.savetxt(path, data, fmt=FMT, delimiter=",", header=header, comments="")


def write_path(filename: str, path: Path) -> None:
    _write_rows(filename, "t,q", [path.times, path.values])


def read_path(filename: str) -> Path:
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    return Path(times=data[:, 0], values=data[:, 1])


def write_brownian(filename: str, beta) -> None:
    ell = np.arange(beta.values.size) * beta.dt_eff
    _write_rows(filename, f"ell,beta,dt_eff={beta.dt_eff!r}",
                [ell, beta.values])


def read_brownian(filename: str):
    from .scale_time import BrownianPath
    with open(filename) as f:
        header = f.readline().strip()
    dt_eff = float(header.rsplit("dt_eff=", 1)[1])
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    return BrownianPath(dt_eff=dt_eff, values=data[:, 1])


def write_time_change(filename: str, tc) -> None:
    _write_rows(filename, "ell,t_real", [tc.ell_grid, tc.Tinv])


def write_jump_chain(filename: str, chain) -> None:
    t = np.concatenate([[0.0], chain.times])
    s = np.concatenate([[chain.initial], chain.states]).astype(float)
    _write_rows(filename, f"t,state,horizon={chain.horizon!r}", [t, s])


def read_jump_chain(filename: str):
    from .spike_limit import JumpChain
    with open(filename) as f:
        header = f.readline().strip()
    horizon = float(header.rsplit("horizon=", 1)[1])
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    return JumpChain(initial=int(data[0, 1]), times=data[1:, 0],
                     horizon=horizon)


def write_spikes(filename: str, spikes) -> None:
    _write_rows(filename, "t,state,m",
                [spikes.times, spikes.states.astype(float), spikes.maxima])


def write_limit_graph(filename: str, graph, delta: float = 1e-3) -> None:
    """Rows (t, y_low, y_high): chain segments sampled every delta in
    normalized time as degenerate rows, columns kept exact."""
    from .graph_metric import planar_from_limit
    ps = planar_from_limit(graph, delta=delta)
    t = np.concatenate([ps.points[:, 0], ps.columns[:, 0]])
    lo = np.concatenate([ps.points[:, 1], ps.columns[:, 1]])
    hi = np.concatenate([ps.points[:, 1], ps.columns[:, 2]])
    order = np.argsort(t, kind="stable")
    _write_rows(filename, f"t,y_low,y_high,H={graph.H!r}",
                [t[order], lo[order], hi[order]])


def read_limit_graph(filename: str, delta: float = 1e-3):
    """Read a limit-graph CSV back as a PlanarSet (degenerate rows as
    points, the rest as columns)."""
    from .graph_metric import PlanarSet
    with open(filename) as f:
        header = f.readline().strip()
    H = float(header.rsplit("H=", 1)[1])
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    degenerate = data[:, 1] == data[:, 2]
    return PlanarSet(points=data[degenerate][:, :2],
                     columns=data[~degenerate], H=H, delta=delta)


def write_matrix_trajectory(filename: str, times: np.ndarray,
                            states: np.ndarray) -> None:
    """Density-matrix trajectory: one row per time, flattened entries
    split into re/im columns."""
    k, n, _ = states.shape
    cols = [times]
    names = ["t"]
    for i in range(n):
        for j in range(n):
            cols.append(states[:, i, j].real)
            cols.append(states[:, i, j].imag)
            names.append(f"re_{i}{j}")
            names.append(f"im_{i}{j}")
    _write_rows(filename, ",".join(names), cols)


def write_table(filename: str, header: str, rows: list[list[float]]) -> None:
    arr = np.asarray(rows, dtype=float)
    np.savetxt(filename, arr, fmt=FMT, delimiter=",", header=header,
               comments="")


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key=value lines; blank lines and '#' comments ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, "
                             f"got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"config line {lineno}: empty key")
        out[key] = value.strip()
    return out


def read_config(filename: str) -> dict[str, str]:
    with open(filename) as f:
        return parse_config_text(f.read())


def write_manifest(output_dir: str, mode: str, config: dict,
                   seed: int, files: list[str]) -> str:
    """Manifest JSON: config hash, seed, produced files. No timestamp,
    so reruns are byte-identical."""
    import hashlib

    blob = json.dumps(config, sort_keys=True)
    manifest = {
        "mode": mode,
        "seed": seed,
        "config": config,
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "files": sorted(os.path.basename(f) for f in files),
    }
    path = os.path.join(output_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
