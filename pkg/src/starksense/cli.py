"""Command-line front end: config-driven, deterministic CSV/JSON outputs.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 degenerate posterior.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .analysis import (ConvergenceError, ScalingSeries, avg_cfi, default_initial_pattern, fit_power_law,
                       rolling_exponent, time_windows, transition_scan)
from .basis import enumerate_basis
from .bayes import (DegeneratePosterior, EstimationProtocol, LikelihoodModel, closed_probability_table,
                    default_h_grid, open_probability_table, split_shots, trial_statistics)
from .config import COMMANDS, PRESETS, ConfigError, RunConfig, config_hash, dumps, from_dict, load, with_overrides
from .dynamics import initial_state, trajectory
from .fisher import cfi_empirical, closed_fisher_series, open_cfi_series
from .hamiltonian import ModelParams, build_hamiltonian
from .lindblad import DecoherenceParams, LindbladPropagator, basis_density, build_sector_basis
from .measurement import ReadoutFidelities, derive_seed, make_rng

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_DEGENERATE = 0, 2, 3, 4
THREADS_ENV = "STARKSENSE_THREADS"

# stream labels for derive_seed
_STREAM_FISHER, _STREAM_ESTIMATE, _STREAM_SCALING, _STREAM_CALIBRATION = 1, 2, 3, 4


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def header_lines(cfg: RunConfig) -> list[str]:
    return [
        f"starksense {__version__}",
        f"command: {cfg.command}",
        f"preset: {cfg.preset or '-'}",
        f"seed: {cfg.seed}",
        f"config_sha256: {config_hash(cfg)}",
    ]


def render_csv(cfg: RunConfig, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    for line in header_lines(cfg):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def render_json(cfg: RunConfig, results: dict) -> str:
    meta = dict(line.split(": ", 1) for line in header_lines(cfg)[1:])
    meta["version"] = __version__
    doc = {"meta": meta, "results": results}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _params(cfg: RunConfig, h: float = 0.0, L: int | None = None) -> ModelParams:
    return ModelParams(L or cfg.model.L, cfg.model.J, h)


def _pattern(cfg: RunConfig) -> tuple[int, ...]:
    return tuple(cfg.model.initial) or default_initial_pattern(cfg.model.L, cfg.model.k)


def decoherence(cfg: RunConfig) -> DecoherenceParams:
    d, L = cfg.decoherence, cfg.model.L
    if d.mode == "none":
        return DecoherenceParams.ideal(L)
    if d.mode == "uniform":
        return DecoherenceParams.uniform(L)
    if d.mode == "custom" or d.T1:
        return DecoherenceParams(d.T1, d.T2star)
    return DecoherenceParams.device("per_qubit")


def readout(cfg: RunConfig) -> ReadoutFidelities:
    r = cfg.readout
    return ReadoutFidelities(r.F0, r.F1) if r.F0 else ReadoutFidelities.device()


def _pool_map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---- commands -------------------------------------------------------------

def cmd_transport(cfg: RunConfig) -> dict[str, str]:
    """Site populations versus time (closed, and open / open+readout when enabled)."""
    L, k = cfg.model.L, cfg.model.k
    basis, pattern, times = enumerate_basis(L, k), _pattern(cfg), np.array(cfg.times)
    with_open = cfg.decoherence.mode != "none"
    fid = readout(cfg) if cfg.readout.apply else None

    def one(h):
        psi, _ = trajectory(build_hamiltonian(_params(cfg, h), basis), None, initial_state(basis, pattern), times)
        closed = (np.abs(psi) ** 2) @ basis.occupations
        out = [("closed", closed)]
        if with_open:
            sb = build_sector_basis(L, k)
            prop = LindbladPropagator(_params(cfg, h), decoherence(cfg), sb, dt=cfg.decoherence.dt)
            rhos = prop.series(basis_density(sb, pattern), times)
            pops = np.array([np.clip(np.real(np.diag(r)), 0, None) @ sb.occupations for r in rhos])
            out.append(("open", pops))
            if fid is not None:
                f0, f1 = np.array(fid.F0), np.array(fid.F1)
                out.append(("open_readout", (1 - f0) * (1 - pops) + f1 * pops))
        return out

    results = _pool_map(one, cfg.model.h, cfg.threads)
    rows = []
    for h, series in zip(cfg.model.h, results):
        for label, pops in series:
            for t, p in zip(times, pops):
                rows.append([h, t, label, *p])
    cols = ["h_mhz", "t_ns", "model"] + [f"P_{j}" for j in range(1, L + 1)]
    return {"transport.csv": render_csv(cfg, cols, rows)}


def _empirical_cfi(p_h: np.ndarray, p_back: np.ndarray, shots: int, eps: float, seed: int) -> float:
    rng = make_rng(seed)
    a = rng.multinomial(shots, p_h / p_h.sum()) / shots
    b = rng.multinomial(shots, p_back / p_back.sum()) / shots
    return float(cfi_empirical(a, b, eps))


def fisher_rows(cfg: RunConfig) -> list[list]:
    L, k = cfg.model.L, cfg.model.k
    basis, pattern, times = enumerate_basis(L, k), _pattern(cfg), np.array(cfg.times)
    f = cfg.fisher
    psi0 = initial_state(basis, pattern)

    def one(ih):
        i_h, h = ih
        qfi, cfi = closed_fisher_series(_params(cfg, h), basis, psi0, times)
        psi, _ = trajectory(build_hamiltonian(_params(cfg, h), basis), None, psi0, times)
        back, _ = trajectory(build_hamiltonian(_params(cfg, h - f.eps), basis), None, psi0, times)
        P, Q = np.abs(psi) ** 2, np.abs(back) ** 2
        opened = None
        if f.open and cfg.decoherence.mode != "none":
            sb = build_sector_basis(L, k)
            opened = open_cfi_series(_params(cfg, h), decoherence(cfg), basis_density(sb, pattern), times,
                                     dt=cfg.decoherence.dt)
        rows = []
        for i_t, t in enumerate(times):
            backward = float(cfi_empirical(P[i_t], Q[i_t], f.eps))
            reps = [_empirical_cfi(P[i_t], Q[i_t], f.shots, f.eps,
                                   derive_seed(cfg.seed, _STREAM_FISHER, i_h, i_t, r))
                    for r in range(f.repetitions)]
            rows.append([h, t, qfi[i_t], cfi[i_t], backward, reps[0], float(np.std(reps, ddof=1)),
                         opened[i_t] if opened is not None else float("nan")])
        return rows

    return [r for block in _pool_map(one, list(enumerate(cfg.model.h)), cfg.threads) for r in block]


FISHER_COLUMNS = ["h_mhz", "t_ns", "qfi", "cfi_exact", "cfi_backward", "cfi_empirical", "cfi_empirical_sd", "cfi_open"]


def cmd_fisher(cfg: RunConfig) -> dict[str, str]:
    return {"fisher.csv": render_csv(cfg, FISHER_COLUMNS, fisher_rows(cfg))}


def _likelihood(cfg: RunConfig, grid: np.ndarray, times: Sequence[float]):
    """(LikelihoodModel, truth function h -> (len(times), dim))."""
    L, k, pattern = cfg.model.L, cfg.model.k, _pattern(cfg)
    src = cfg.estimate.likelihood
    if src == "open":
        model = LikelihoodModel.open(_params(cfg), decoherence(cfg), k, pattern, grid, times, dt=cfg.decoherence.dt)

        def truth(h):
            return open_probability_table(_params(cfg), decoherence(cfg), k, pattern, [h], times,
                                          dt=cfg.decoherence.dt)[0][0]
        return model, truth
    basis = enumerate_basis(L, k)
    exact = LikelihoodModel.closed(_params(cfg), basis, pattern, grid, times)

    def truth(h):
        return closed_probability_table(_params(cfg), basis, pattern, [h], times)[0]
    if src == "rebuilt":
        exact = LikelihoodModel.rebuilt(exact, cfg.estimate.calibration_shots,
                                        derive_seed(cfg.seed, _STREAM_CALIBRATION))
    return exact, truth


ESTIMATE_COLUMNS = ["protocol", "true_h", "h_est_mean", "h_est_sd", "M", "times_ns", "repetitions", "seed", "status"]


def estimate_rows(cfg: RunConfig) -> list[list]:
    e = cfg.estimate
    grid = default_h_grid(*e.grid)
    all_times = sorted({t for p in e.protocols for t in p.times})
    model, truth = _likelihood(cfg, grid, all_times)
    slot = {t: i for i, t in enumerate(all_times)}
    truths = {h: truth(h) for h in e.true_h}
    jobs = [(ip, p, ih, h) for ip, p in enumerate(e.protocols) for ih, h in enumerate(e.true_h)]

    def one(job):
        ip, p, ih, h = job
        seed = derive_seed(cfg.seed, _STREAM_ESTIMATE, ip, ih)
        label = " ".join(_fmt(t) for t in p.times)
        if e.M == 0:
            # no data: the posterior is the uniform prior, so no point estimate
            return [p.name, h, float("nan"), float("nan"), 0, label, e.repetitions, seed, "no-data"]
        proto = EstimationProtocol(model, p.times, split_shots(e.M, len(p.times)), h,
                                   truths[h][[slot[t] for t in p.times]])
        stats = trial_statistics(proto, e.repetitions, seed)
        return [p.name, h, stats.mean, stats.sd, e.M, label, e.repetitions, seed, "ok"]

    return _pool_map(one, jobs, cfg.threads)


def cmd_estimate(cfg: RunConfig) -> dict[str, str]:
    return {"estimate.csv": render_csv(cfg, ESTIMATE_COLUMNS, estimate_rows(cfg))}


SCALING_COLUMNS = ["K", "t_avg_ns", "cfi_avg", "M", "M_cfi_avg", "inv_var", "inv_var_se", "cfi_avg_open"]


def scaling_results(cfg: RunConfig) -> tuple[list[list], dict]:
    s = cfg.scaling
    L, k, pattern = cfg.model.L, cfg.model.k, _pattern(cfg)
    basis = enumerate_basis(L, k)
    params = _params(cfg, s.h)
    rows, summary = [], {}
    for K in s.K:
        windows = time_windows(K, s.spacing, s.first_center, s.horizon, s.center_step)
        times = np.unique(np.concatenate(windows))
        _, cfi = closed_fisher_series(params, basis, initial_state(basis, pattern), times)
        lookup = dict(zip(times, cfi))
        pairs = [avg_cfi(w, [lookup[t] for t in w]) for w in windows]
        t_avg = np.array([p[0] for p in pairs])
        f_avg = np.array([p[1] for p in pairs])
        M = K * s.shots_per_time
        inv_var = np.full(len(windows), np.nan)
        inv_se = np.full(len(windows), np.nan)
        if s.groups >= 4:
            grid = default_h_grid(*s.grid)
            model = LikelihoodModel.closed(params, basis, pattern, grid, times)
            truth = closed_probability_table(params, basis, pattern, [s.h], times)[0]
            index = {t: i for i, t in enumerate(times)}

            def one(iw):
                i, w = iw
                proto = EstimationProtocol(model, tuple(w), (s.shots_per_time,) * K, s.h,
                                           truth[[index[t] for t in w]])
                st = trial_statistics(proto, s.groups, derive_seed(cfg.seed, _STREAM_SCALING, K, i))
                return st.variance, st.variance_se

            stats = np.array(_pool_map(one, list(enumerate(windows)), cfg.threads))
            with np.errstate(divide="ignore", invalid="ignore"):
                inv_var = 1.0 / stats[:, 0]
                # delta method: se(1/v) = se(v) / v^2
                inv_se = stats[:, 1] / stats[:, 0] ** 2
        opened = np.full(len(windows), np.nan)
        if s.open:
            sb = build_sector_basis(L, k)
            ocfi = open_cfi_series(params, decoherence(cfg), basis_density(sb, pattern), times,
                                   dt=cfg.decoherence.dt)
            olook = dict(zip(times, ocfi))
            opened = np.array([np.mean([olook[t] for t in w]) for w in windows])
        for i in range(len(windows)):
            rows.append([K, t_avg[i], f_avg[i], M, M * f_avg[i], inv_var[i], inv_se[i], opened[i]])
        entry = {"M": M, "n_windows": len(windows)}
        closed_fit = fit_power_law(ScalingSeries(t_avg, f_avg))
        entry["beta_cfi"] = closed_fit.beta
        entry["fit_residual_rms"] = closed_fit.residual_rms
        if s.groups >= 4:
            finite = np.isfinite(inv_var)
            entry["beta_inv_var"] = fit_power_law(ScalingSeries(t_avg[finite], inv_var[finite])).beta
            bound = M * f_avg
            entry["cramer_rao_violations"] = int(np.sum(inv_var > bound + 2 * inv_se))
        if s.open:
            rolling = rolling_exponent(ScalingSeries(t_avg, opened), s.rolling_window, s.rolling_step)
            entry["rolling_beta_open"] = [[c, b] for c, b in rolling]
        summary[f"K{K}"] = entry
    return rows, summary


def cmd_scaling(cfg: RunConfig) -> dict[str, str]:
    rows, summary = scaling_results(cfg)
    return {"scaling.csv": render_csv(cfg, SCALING_COLUMNS, rows), "scaling.json": render_json(cfg, summary)}


TRANSITION_COLUMNS = ["L", "k", "h_mhz", "qfi_over_t2", "converged"]


def cmd_transition(cfg: RunConfig) -> dict[str, str]:
    t = cfg.transition
    k = cfg.model.k
    curves = transition_scan(t.L, k, t.h, t_horizon=t.horizon, J=cfg.model.J, dt=t.dt,
                             tail_fraction=t.tail_fraction, tolerance=t.tolerance, threads=cfg.threads)
    rows = [[c.L, c.k, h, v, ok] for c in curves for h, v, ok in zip(c.h_grid, c.plateau, c.converged)]
    summary = {}
    for c in curves:
        i = int(np.argmax(c.plateau))
        summary[f"L{c.L}"] = {"h_c": c.h_c, "peak_converged": bool(c.converged[i]),
                              "pattern": list(default_initial_pattern(c.L, k)),
                              "unconverged_h": [float(h) for h, ok in zip(c.h_grid, c.converged) if not ok]}
    files = {"transition.csv": render_csv(cfg, TRANSITION_COLUMNS, rows),
             "transition.json": render_json(cfg, summary)}
    bad = [c.L for c in curves if not c.converged[int(np.argmax(c.plateau))]]
    if bad:
        raise ConvergenceError(f"plateau at the peak did not converge for L = {bad}", files)
    return files


HANDLERS = {"transport": cmd_transport, "fisher": cmd_fisher, "estimate": cmd_estimate,
            "scaling": cmd_scaling, "transition": cmd_transition}


def run(cfg: RunConfig) -> dict[str, str]:
    """Execute the configured command and return {file name: contents}."""
    return HANDLERS[cfg.command](cfg)


def write_outputs(cfg: RunConfig, files: dict[str, str]) -> list[Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = dict(files)
    files["config.toml"] = dumps(cfg)
    paths = []
    for name in sorted(files):
        p = out / name
        p.write_text(files[name])
        paths.append(p)
    return paths


def schema_text() -> str:
    return resources.files("starksense").joinpath("csv_schema.json").read_text()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="starksense", description="Stark-chain sensing simulations.")
    ap.add_argument("command", choices=COMMANDS + ("run", "show-config", "schema", "presets"),
                    help="what to compute; 'run' uses the command stored in the config")
    ap.add_argument("--config", help="TOML config file")
    ap.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
    ap.add_argument("--seed", type=int, help="root RNG seed (u64)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, help=f"worker threads (also ${THREADS_ENV})")
    ap.add_argument("--version", action="version", version=f"starksense {__version__}")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = load(args.config)
        if args.preset:
            raise ConfigError("give either --config or --preset, not both")
    elif args.preset:
        cfg = from_dict({"preset": args.preset})
    else:
        cfg = from_dict({})
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    command = args.command if args.command in COMMANDS else None
    return with_overrides(cfg, seed=args.seed, out=args.out, threads=threads, command=command)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        sys.stdout.write(schema_text())
        return EXIT_OK
    if args.command == "presets":
        sys.stdout.write("".join(f"{name}\t{PRESETS[name]['command']}\n" for name in sorted(PRESETS)))
        return EXIT_OK
    try:
        cfg = resolve_config(args)
        if args.command == "show-config":
            sys.stdout.write(dumps(cfg))
            return EXIT_OK
        files = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        if len(exc.args) > 1:
            write_outputs(cfg, exc.args[1])
        print(f"non-convergence: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DegeneratePosterior as exc:
        print(f"degenerate posterior: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    for p in write_outputs(cfg, files):
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
