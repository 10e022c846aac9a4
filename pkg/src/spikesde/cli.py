"""Command line front end: configured, reproducible experiment runs.

Every run resolves an ExperimentConfig from three layers (built-in
defaults, then a key=value config file, then command line flags, last
writer wins), derives all randomness from one seed, writes its CSV or
JSON artifacts into the output directory, and finishes with a
manifest.json recording the resolved config, its hash, and the file
list. Reruns with the same config and seed are byte identical.

The output directory resolves as: --output-dir flag, else the
SPIKESDE_OUTPUT_DIR environment variable, else the config file's
output_dir, else the current directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io as sio
from .rng import stream
from . import belavkin as bk
from .twostate import TwoStateParams, simulate
from .scale_time import (
    ScaleFunction,
    BrownianPath,
    ClockExhausted,
    sample_brownian,
    mixed_local_time_clock,
    coupled_trajectory,
)
from .spike_limit import sample_Q, sample_first_spike, sample_spikes, limit_graph
from .graph_metric import graph_of, planar_from_limit, hausdorff

MODES = ("belavkin", "twostate", "coupled-sweep", "limit-sample",
         "validate", "hausdorff-sweep")

ENV_OUTPUT_DIR = "SPIKESDE_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid or missing configuration value; message names the key."""


def _positive(x: float) -> bool:
    return x > 0


def _nonneg(x: float) -> bool:
    return x >= 0


def _unit_open(x: float) -> bool:
    return 0.0 < x < 1.0


def _unit_closed(x: float) -> bool:
    return 0.0 <= x <= 1.0


@dataclass(frozen=True)
class _Param:
    kind: type                 # float, int, or str
    default: object
    check: object = None       # predicate on the parsed value
    expect: str = ""           # range description for error messages
    help: str = ""


# per-mode parameter schemas; flags mirror these keys one to one
SCHEMAS: dict[str, dict[str, _Param]] = {
    "belavkin": {
        "n": _Param(int, 3, lambda v: v >= 2, "integer >= 2", "Hilbert space dimension"),
        "gamma": _Param(float, 10.0, _positive, "positive real", "measurement strength"),
        "dt": _Param(float, 1e-3, _positive, "positive real", "requested step"),
        "T": _Param(float, 1.0, _nonneg, "real >= 0", "horizon"),
        "stride": _Param(int, 10, _positive, "positive integer", "keep every k-th state"),
    },
    "twostate": {
        "gamma": _Param(float, 400.0, _positive, "positive real", "noise strength"),
        "lam": _Param(float, 1.0, _positive, "positive real", "total jump rate"),
        "p": _Param(float, 0.3, _unit_open, "real in (0,1)", "stationary mean"),
        "q0": _Param(float, 0.3, _unit_closed, "real in [0,1]", "initial value"),
        "dt": _Param(float, 1e-5, _positive, "positive real", "requested step"),
        "T": _Param(float, 1.0, _nonneg, "real >= 0", "horizon"),
        "stride": _Param(int, 100, _positive, "positive integer", "keep every k-th sample"),
    },
    "coupled-sweep": {
        "gammas": _Param(str, "100,1000,10000", None, "comma list of positive reals",
                         "gamma sweep"),
        "lam": _Param(float, 1.0, _positive, "positive real", "total jump rate"),
        "p": _Param(float, 0.3, _unit_open, "real in (0,1)", "stationary mean"),
        "q0": _Param(float, 0.3, _unit_open, "real in (0,1)", "anchor and start"),
        "L": _Param(float, 10.0, _positive, "positive real", "effective horizon"),
        "dt_eff": _Param(float, 1e-5, _positive, "positive real", "effective step"),
        "H": _Param(float, 0.0, _nonneg, "real >= 0 (0 means auto)",
                    "real-time horizon; 0 picks 0.8x the reachable total"),
        "delta": _Param(float, 1e-3, _positive, "positive real", "graph sampling step"),
        "m_min": _Param(float, 1e-3, _unit_open, "real in (0,1)", "spike depth cutoff"),
        "thin": _Param(float, 5e-4, _nonneg, "real >= 0 (0 keeps all)", "path thinning"),
        "traj": _Param(int, 0, _nonneg, "integer >= 0", "stream index of the driving path"),
    },
    "limit-sample": {
        "lam": _Param(float, 1.0, _positive, "positive real", "total jump rate"),
        "p": _Param(float, 0.3, _unit_open, "real in (0,1)", "stationary mean"),
        "x0": _Param(float, 0.3, _unit_closed, "real in [0,1]", "initial level"),
        "H": _Param(float, 50.0, _positive, "positive real", "chain horizon"),
        "m_min": _Param(float, 1e-3, _unit_open, "real in (0,1)", "spike depth cutoff"),
        "n_first": _Param(int, 0, _nonneg, "integer >= 0",
                          "also draw this many first-spike samples"),
    },
    "validate": {
        "profile": _Param(str, "full", lambda v: v in ("full", "quick"),
                          "one of full, quick", "battery size"),
        "criteria": _Param(str, "", None, "comma list of integers in 1..10",
                           "subset to run (empty means all)"),
    },
    "hausdorff-sweep": {
        "paths": _Param(str, "", None, "comma list of Path CSV files",
                        "trajectory files to compare"),
        "limit_graph": _Param(str, "", None, "LimitGraph CSV file",
                              "reference set all paths are compared to"),
        "delta": _Param(float, 1e-3, _positive, "positive real", "graph sampling step"),
    },
}


@dataclass
class ExperimentConfig:
    mode: str
    params: dict = field(default_factory=dict)
    seed: int = 12345
    output_dir: str = "."


def _parse_value(mode: str, key: str, raw, schema: dict[str, _Param]):
    if key not in schema:
        raise ConfigError(f"{key}: unknown key for mode {mode}; "
                          f"valid keys: {', '.join(sorted(schema))}")
    spec = schema[key]
    try:
        val = spec.kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {spec.expect}, got {raw!r}") from None
    if spec.check is not None and not spec.check(val):
        raise ConfigError(f"{key}: expected {spec.expect}, got {raw!r}")
    return val


def resolve_config(mode: str, config_file: str | None, flag_params: dict,
                   seed: int | None, output_dir: str | None) -> ExperimentConfig:
    """Merge defaults, config file, and flags into a validated config.

    Precedence per key: flag beats config file beats default. The seed
    and output_dir follow the same rule, with the output directory
    also honoring the environment variable between flag and file.
    """
    schema = SCHEMAS[mode]
    params = {k: spec.default for k, spec in schema.items()}
    file_seed = None
    file_outdir = None
    if config_file:
        raw = sio.read_config(config_file)
        for k, v in raw.items():
            if k == "mode":
                if v != mode:
                    raise ConfigError(f"mode: config file says {v!r} but the "
                                      f"{mode!r} subcommand was invoked")
            elif k == "seed":
                file_seed = _parse_int(k, v)
            elif k == "output_dir":
                file_outdir = v
            else:
                params[k] = _parse_value(mode, k, v, schema)
    for k, v in flag_params.items():
        if v is not None:
            params[k] = _parse_value(mode, k, v, schema)

    final_seed = seed if seed is not None else (
        file_seed if file_seed is not None else 12345)
    out = output_dir or os.environ.get(ENV_OUTPUT_DIR) or file_outdir or "."
    return ExperimentConfig(mode=mode, params=params, seed=final_seed,
                            output_dir=out)


def _parse_int(key: str, raw) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected integer, got {raw!r}") from None


def _parse_gammas(raw: str) -> list[float]:
    try:
        vals = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"gammas: expected comma list of positive reals, "
                          f"got {raw!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError(f"gammas: expected comma list of positive reals, "
                          f"got {raw!r}")
    return vals


def _out(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _run_belavkin(cfg: ExperimentConfig) -> list[str]:
    p = cfg.params
    model = bk.random_thermal_model(p["n"], stream(cfg.seed, 0), p["gamma"])
    rho0 = bk.DensityMatrix(np.eye(p["n"], dtype=complex) / p["n"])
    traj = bk.simulate_belavkin(model.to_belavkin(), rho0, dt=p["dt"],
                                T=p["T"], seed=cfg.seed, stride=p["stride"],
                                traj_index=1)
    fn = _out(cfg, "belavkin_trajectory.csv")
    sio.write_matrix_trajectory(fn, traj.times, traj.states)
    return [fn]


def _run_twostate(cfg: ExperimentConfig) -> list[str]:
    p = cfg.params
    params = TwoStateParams(gamma=p["gamma"], lam=p["lam"], p=p["p"])
    path = simulate(params, q0=p["q0"], dt=p["dt"], T=p["T"], seed=cfg.seed,
                    stride=p["stride"])
    fn = _out(cfg, "twostate_path.csv")
    sio.write_path(fn, path)
    return [fn]


def _coupled_job(args: tuple) -> tuple[float, str, float]:
    """One gamma of the sweep: write the coupled path CSV and return
    (gamma, filename, Hausdorff distance to the limit set). Runs in a
    worker process; everything it needs arrives by value."""
    (gamma, lam, p, q0, H, delta, thin, beta_values, dt_eff, planar, out_fn) = args
    beta = BrownianPath(dt_eff=dt_eff, values=beta_values)
    params = TwoStateParams(gamma=gamma, lam=lam, p=p)
    sf = ScaleFunction(params, q0=q0)
    cp = coupled_trajectory(beta, params, q0, H=H, thin=thin, scale_fn=sf)
    sio.write_path(out_fn, cp)
    d = hausdorff(graph_of(cp, delta=delta, H=H), planar)
    return gamma, out_fn, d


def _run_coupled_sweep(cfg: ExperimentConfig, workers: int) -> list[str]:
    p = cfg.params
    gammas = _parse_gammas(p["gammas"])
    beta = sample_brownian(p["q0"], p["dt_eff"], p["L"], cfg.seed,
                           traj_index=p["traj"])
    clock = mixed_local_time_clock(beta, p["lam"], p["p"])
    H = p["H"] if p["H"] > 0 else 0.8 * clock.total
    if H > clock.total:
        raise ConfigError(
            f"H: requested horizon {H:g} exceeds the path's reachable total "
            f"{clock.total:g}; raise L or lower H")
    lg = limit_graph(beta, p["lam"], p["p"], H=H, m_min=p["m_min"], clock=clock)
    del clock
    files = [_out(cfg, "limit_graph.csv")]
    sio.write_limit_graph(files[0], lg, delta=p["delta"])
    planar = planar_from_limit(lg, delta=p["delta"])

    thin = p["thin"] if p["thin"] > 0 else None
    jobs = [(g, p["lam"], p["p"], p["q0"], H, p["delta"], thin, beta.values,
             p["dt_eff"], planar, _out(cfg, f"coupled_gamma{g:g}.csv"))
            for g in gammas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_coupled_job, jobs))
    else:
        results = [_coupled_job(j) for j in jobs]

    table = _out(cfg, "hausdorff.csv")
    sio.write_table(table, "gamma,hausdorff",
                    [[g, d] for g, _, d in results])
    files.extend(fn for _, fn, _ in results)
    files.append(table)
    return files


def _run_limit_sample(cfg: ExperimentConfig) -> list[str]:
    p = cfg.params
    chain = sample_Q(p["lam"], p["p"], p["x0"], cfg.seed, traj_index=0,
                     H=p["H"])
    spikes = sample_spikes(p["lam"], p["p"], chain, p["m_min"], cfg.seed,
                           traj_index=1)
    files = [_out(cfg, "jump_chain.csv"), _out(cfg, "spikes.csv")]
    sio.write_jump_chain(files[0], chain)
    sio.write_spikes(files[1], spikes)
    if p["n_first"] > 0:
        fs = sample_first_spike(p["x0"], cfg.seed, traj_index=2, n=p["n_first"])
        fn = _out(cfg, "first_spikes.csv")
        sio.write_table(fn, "q,y", [[int(q), y] for q, y in zip(fs.q, fs.y)])
        files.append(fn)
    return files


def _run_validate(cfg: ExperimentConfig) -> tuple[list[str], bool]:
    from . import validate as V
    p = cfg.params
    criteria = None
    if p["criteria"].strip():
        try:
            criteria = [int(x) for x in p["criteria"].split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"criteria: expected comma list of integers in "
                              f"1..10, got {p['criteria']!r}") from None
    try:
        results = V.run_all(cfg.seed, criteria=criteria, profile=p["profile"])
    except ValueError as e:
        raise ConfigError(f"criteria: {e}") from None
    fn = _out(cfg, "validation.json")
    V.write_summary(fn, results, cfg.seed)
    return [fn], all(r.passed for r in results)


def _run_hausdorff_sweep(cfg: ExperimentConfig) -> list[str]:
    p = cfg.params
    if not p["paths"]:
        raise ConfigError("paths: expected comma list of Path CSV files, got ''")
    if not p["limit_graph"]:
        raise ConfigError("limit_graph: expected LimitGraph CSV file, got ''")
    names = [x.strip() for x in p["paths"].split(",") if x.strip()]
    for fn in names + [p["limit_graph"]]:
        if not os.path.exists(fn):
            raise ConfigError(f"paths: file not found: {fn}")
    ref = sio.read_limit_graph(p["limit_graph"], delta=p["delta"])
    rows = []
    for fn in names:
        path = sio.read_path(fn)
        d = hausdorff(graph_of(path, delta=p["delta"], H=ref.H), ref)
        rows.append([float(len(rows)), d])
    table = _out(cfg, "hausdorff.csv")
    header = "index,hausdorff"
    sio.write_table(table, header, rows)
    return [table]


def run(cfg: ExperimentConfig, workers: int = 1) -> int:
    """Execute one configured experiment; returns the exit status."""
    all_passed = True
    if cfg.mode == "belavkin":
        files = _run_belavkin(cfg)
    elif cfg.mode == "twostate":
        files = _run_twostate(cfg)
    elif cfg.mode == "coupled-sweep":
        files = _run_coupled_sweep(cfg, workers)
    elif cfg.mode == "limit-sample":
        files = _run_limit_sample(cfg)
    elif cfg.mode == "validate":
        files, all_passed = _run_validate(cfg)
    elif cfg.mode == "hausdorff-sweep":
        files = _run_hausdorff_sweep(cfg)
    else:
        raise ConfigError(f"mode: expected one of {', '.join(MODES)}, "
                          f"got {cfg.mode!r}")
    sio.write_manifest(cfg.output_dir, cfg.mode, cfg.params, cfg.seed, files)
    for fn in files:
        print(fn)
    return 0 if all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikesde",
        description="strong-noise two-state diffusion toolkit")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", default=None,
                        help="key=value config file; flags override it")
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed (default 12345)")
        sp.add_argument("--output-dir", default=None,
                        help=f"artifact directory (or ${ENV_OUTPUT_DIR})")
        sp.add_argument("--workers", type=int, default=1,
                        help="parallel workers for ensemble modes")
        for key, spec in SCHEMAS[mode].items():
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key,
                            default=None, metavar=spec.kind.__name__.upper(),
                            help=f"{spec.help} ({spec.expect}; "
                                 f"default {spec.default!r})")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    flag_params = {k: getattr(args, k) for k in SCHEMAS[args.mode]}
    try:
        cfg = resolve_config(args.mode, args.config, flag_params, args.seed,
                             args.output_dir)
        if args.workers < 1:
            raise ConfigError(f"workers: expected positive integer, "
                              f"got {args.workers}")
        return run(cfg, workers=args.workers)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ClockExhausted, bk.PositivityError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
