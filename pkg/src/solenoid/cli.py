"""Command-line entry point: ``solenoid <subcommand> [--config FILE] [--set k=v ...]``.

Exit codes: 0 success, 2 invalid configuration, 3 budget exhausted (partial
results are still written).
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import FORMAT_VERSION, __version__
from .dynamics import SystemParams, step
from .genericity import ParameterFamily, bad_set_measure
from .io import dumps, write_csv, write_json, write_pgm
from .sobolev import SobolevSpec, regularity_sweep
from .transfer import (
    correlation_decay,
    fiber_coordinate,
    sbr_density,
    second_eigenvalue,
    ulam_build,
)
from .transversality import ENCLOSURES, BudgetExceeded, e_q_stabilized, gamma_ref

log = logging.getLogger("solenoid")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3
SUBCOMMANDS = (
    "simulate",
    "transversality",
    "density",
    "spectrum",
    "correlations",
    "sobolev",
    "genericity",
    "report",
)

DEFAULTS: dict = {
    "system": {"lap": 3, "lambda": 0.6, "f": {"cos": [0.0, 1.0], "sin": [0.0]}, "r": 3, "s": 0.3, "kappa": None},
    "seed": 0,
    "output_dir": None,
    "budgets": {"enumeration": 10**7, "iterations": 1000, "trials": 1000},
    "simulate": {"n_steps": 50, "x0": 0.1234, "y0": 1.0},
    "transversality": {"q_max": 3, "p_max": 4, "grid_step": None, "enclosure": "curvature"},
    "density": {"grids": [64, 128], "tol": 1e-8},
    "spectrum": {"grid": [64, 64], "samples_per_cell": 16},
    "correlations": {"n_max": 30, "orbit_len": 200000, "n_chains": 100, "burn_in": 1000, "grid": [64, 64]},
    "sobolev": {"s": None, "L": None, "grids": [64, 128]},
    "genericity": {"lap": 2, "lambda": 0.5, "m": 4, "N0": 4, "q_range": [2, 4], "trials": None, "x_samples": 1},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in out:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(out[k], dict) and k != "f":
            if not isinstance(v, dict):
                raise ConfigError(f"{path + k!r} must be an object")
            out[k] = _merge(out[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def apply_override(cfg: dict, item: str) -> None:
    """Set a dotted key from ``key=value``; value parsed as JSON, else kept as a string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value


def load_config(path: str | None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        cfg = _merge(cfg, user)
    for item in overrides:
        apply_override(cfg, item)
    validate(cfg)
    return cfg


def _int_list(v, name, min_len=1):
    if not isinstance(v, list) or len(v) < min_len or not all(isinstance(i, int) and i > 0 for i in v):
        raise ConfigError(f"{name} must be a list of positive integers")


def _pos_int(v, name, allow_none=False):
    if v is None and allow_none:
        return
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(f"{name} must be a positive integer")


def system_of(cfg: dict) -> SystemParams:
    try:
        return SystemParams.from_dict(cfg["system"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"system: {exc}") from exc


def validate(cfg: dict) -> None:
    """Check every block so no computation starts on a bad config."""
    system_of(cfg)
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    for k in ("enumeration", "iterations", "trials"):
        _pos_int(cfg["budgets"][k], f"budgets.{k}")
    sim = cfg["simulate"]
    _pos_int(sim["n_steps"], "simulate.n_steps")
    for k in ("x0", "y0"):
        if not isinstance(sim[k], (int, float)):
            raise ConfigError(f"simulate.{k} must be a number")
    tr = cfg["transversality"]
    _pos_int(tr["q_max"], "transversality.q_max")
    if not isinstance(tr["p_max"], int) or tr["p_max"] < 2:
        raise ConfigError("transversality.p_max must be an integer >= 2")
    if tr["grid_step"] is not None and not (isinstance(tr["grid_step"], (int, float)) and tr["grid_step"] > 0):
        raise ConfigError("transversality.grid_step must be positive or null")
    if tr["enclosure"] not in ENCLOSURES:
        raise ConfigError(f"transversality.enclosure must be one of {list(ENCLOSURES)}")
    de = cfg["density"]
    _int_list(de["grids"], "density.grids")
    if not (isinstance(de["tol"], (int, float)) and de["tol"] > 0):
        raise ConfigError("density.tol must be positive")
    _int_list(cfg["spectrum"]["grid"], "spectrum.grid", 2)
    _pos_int(cfg["spectrum"]["samples_per_cell"], "spectrum.samples_per_cell")
    co = cfg["correlations"]
    for k in ("n_max", "orbit_len", "n_chains", "burn_in"):
        _pos_int(co[k], f"correlations.{k}")
    _int_list(co["grid"], "correlations.grid", 2)
    so = cfg["sobolev"]
    _int_list(so["grids"], "sobolev.grids")
    if any(b <= a for a, b in zip(so["grids"], so["grids"][1:])):
        raise ConfigError("sobolev.grids must be increasing")
    for k in ("s", "L"):
        v = so[k]
        if v is not None and not (isinstance(v, (int, float)) and v >= 0):
            raise ConfigError(f"sobolev.{k} must be a nonnegative number or null")
    ge = cfg["genericity"]
    for k in ("lap", "m", "N0", "x_samples"):
        _pos_int(ge[k], f"genericity.{k}")
    _pos_int(ge["trials"], "genericity.trials", allow_none=True)
    _int_list(ge["q_range"], "genericity.q_range", 2)
    if ge["q_range"][0] > ge["q_range"][1]:
        raise ConfigError("genericity.q_range must be [q_min, q_max]")
    try:
        ParameterFamily.fourier(ge["lap"], ge["lambda"], ge["m"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"genericity: {exc}") from exc


# subcommands; each returns (payload, exit_code)


def run_simulate(cfg, out: Path):
    p = system_of(cfg)
    sim = cfg["simulate"]
    x, y = float(sim["x0"]), float(sim["y0"])
    rows = [{"n": 0, "x": x, "y": y}]
    for n in range(1, sim["n_steps"] + 1):
        xn, yn = step(p, (x, y))
        x, y = float(xn), float(yn)
        rows.append({"n": n, "x": x, "y": y})
    write_csv(out / "orbit.csv", rows, cfg)
    return {"n_steps": sim["n_steps"], "final": rows[-1]}, EXIT_OK


def run_transversality(cfg, out: Path):
    p = system_of(cfg)
    tr = cfg["transversality"]
    budget = cfg["budgets"]["enumeration"]
    code = EXIT_OK
    rows = []
    for q in range(1, tr["q_max"] + 1):
        try:
            rep = e_q_stabilized(p, q, tr["p_max"], tr["grid_step"], budget, tr["enclosure"])
        except BudgetExceeded as exc:
            log.error("%s", exc)
            code = EXIT_BUDGET
            break
        row = rep.row()
        row["growth"] = math.log(rep.e_upper) / q if rep.e_upper else float("-inf")
        row["gamma_ref"] = gamma_ref(p, rep.e_upper, q) if rep.e_upper else 0.0
        rows.append(row)
        if not rep.stabilized and len(rep.history) < tr["p_max"]:
            code = EXIT_BUDGET  # the p-sweep stopped on the budget
            break
    cols = ["q", "p", "e_lower", "e_upper", "stabilized", "criterion", "growth", "gamma_ref"]
    write_csv(out / "transversality.csv", rows, cfg, cols)
    last = rows[-1] if rows else None
    payload = {"rows": rows, "criterion": last["criterion"] if last else None, "complete": code == EXIT_OK}
    return payload, code


def _heatmap(out: Path, name: str, values, cfg):
    write_pgm(out / name, values, "config=" + json.dumps(cfg, sort_keys=True))


def run_density(cfg, out: Path):
    p = system_of(cfg)
    de = cfg["density"]
    iters = cfg["budgets"]["iterations"]
    rows, code = [], EXIT_OK
    for n in de["grids"]:
        psi = sbr_density(p, n, n, iters=iters, tol=de["tol"])
        hist = psi.meta["history"]
        rows.append(
            {
                "grid": n,
                "iterations": psi.meta["iterations"],
                "converged": psi.meta["converged"],
                "residual": hist[-1] if hist else float("nan"),
                "mass": psi.mass(),
            }
        )
        _heatmap(out, f"density_{n}.pgm", psi.values, cfg)
        if not psi.meta["converged"]:
            log.error("density on %dx%d did not converge within %d iterations", n, n, iters)
            code = EXIT_BUDGET
    write_csv(out / "density.csv", rows, cfg)
    return {"rows": rows}, code


def run_spectrum(cfg, out: Path):
    p = system_of(cfg)
    sp = cfg["spectrum"]
    nx, ny = sp["grid"]
    op = ulam_build(p, nx, ny, sp["samples_per_cell"], seed=cfg["seed"])
    est = second_eigenvalue(op, iters=cfg["budgets"]["iterations"] * 3, seed=cfg["seed"])
    payload = {
        "grid": [nx, ny],
        "second_eigenvalue": est.value,
        "converged": est.converged,
        "iterations": est.iterations,
        "mass_error": op.mass_error,
    }
    return payload, EXIT_OK if est.converged else EXIT_BUDGET


def run_correlations(cfg, out: Path):
    p = system_of(cfg)
    co = cfg["correlations"]
    obs = {
        "fiber": (fiber_coordinate, fiber_coordinate),
        "cos_fiber": (lambda x, y: np.cos(2 * np.pi * x), fiber_coordinate),
    }
    d = correlation_decay(
        p,
        obs,
        n_max=co["n_max"],
        orbit_len=co["orbit_len"],
        n_chains=co["n_chains"],
        burn_in=co["burn_in"],
        seed=cfg["seed"],
        ulam_grid=tuple(co["grid"]),
    )
    rows = [
        {"observable": name, "n": n, "C_n": float(c)}
        for name, cs in sorted(d.correlations.items())
        for n, c in enumerate(cs)
    ]
    write_csv(out / "correlations.csv", rows, cfg)
    return d.to_dict(), EXIT_OK


def _read_criterion(out: Path):
    f = out / "transversality.json"
    if not f.exists():
        return None
    try:
        return json.loads(f.read_text()).get("result", {}).get("criterion")
    except (OSError, json.JSONDecodeError):
        return None


def run_sobolev(cfg, out: Path):
    p = system_of(cfg)
    so = cfg["sobolev"]
    s = p.s if so["s"] is None else float(so["s"])
    spec = SobolevSpec.for_system(p, s)
    if so["L"] is not None:
        spec = SobolevSpec(s, float(so["L"]), spec.modes)
    res = regularity_sweep(p, spec, so["grids"], tol=cfg["density"]["tol"], iters=cfg["budgets"]["iterations"])
    res.extra["transversality_criterion"] = _read_criterion(out)
    write_csv(out / "sobolev.csv", res.rows(), cfg, ["grid", "s", "norm", "bounded_flag"])
    payload = {**res.to_dict(), "sobolev_spec": spec.to_dict()}
    return payload, EXIT_OK if all(res.converged) else EXIT_BUDGET


def run_genericity(cfg, out: Path):
    ge = cfg["genericity"]
    fam = ParameterFamily.fourier(ge["lap"], ge["lambda"], ge["m"], r=cfg["system"]["r"])
    trials = ge["trials"] or cfg["budgets"]["trials"]
    rows = []
    for q in range(ge["q_range"][0], ge["q_range"][1] + 1):
        est = bad_set_measure(
            fam, q, ge["N0"], trials=trials, seed=cfg["seed"], budget=cfg["budgets"]["enumeration"],
            x_samples=ge["x_samples"],
        )
        d = est.to_dict()
        rows.append(
            {
                "q": q,
                "p": d["p"],
                "N0": d["N0"],
                "measure_estimate": d["measure_estimate"],
                "ci_low": d["ci"][0],
                "ci_high": d["ci"][1],
                "pairs_enumerated": d["pairs_enumerated"],
                "pairs_found": d["pairs_found"],
                "sampled": d["sampled"],
                "bound_shape": d["bound_shape"],
            }
        )
    write_csv(out / "genericity.csv", rows, cfg)
    return {"family": fam.to_dict(), "rows": rows}, EXIT_OK


def run_report(cfg, out: Path):
    if not out.is_dir():
        raise ConfigError(f"run directory {out} does not exist")
    p = system_of(cfg)
    parts = {}
    for name in SUBCOMMANDS:
        f = out / f"{name}.json"
        if name != "report" and f.exists():
            parts[name] = json.loads(f.read_text()).get("result")
    regime = p.lam ** (1 + 2 * p.s) * p.lap
    payload = {
        "regime": {"value": regime, "s": p.s, "holds": regime > 1},
        "parts": parts,
    }
    write_json(out / "summary.json", {"config": cfg, "format": FORMAT_VERSION, "result": payload})
    return payload, EXIT_OK


RUNNERS = {
    "simulate": run_simulate,
    "transversality": run_transversality,
    "density": run_density,
    "spectrum": run_spectrum,
    "correlations": run_correlations,
    "sobolev": run_sobolev,
    "genericity": run_genericity,
    "report": run_report,
}


def output_dir(cfg: dict, cli_out: str | None) -> Path:
    return Path(cli_out or cfg.get("output_dir") or os.environ.get("OUTPUT_DIR") or "solenoid_out")


def run(subcommand: str, config_path: str | None = None, overrides=(), out: str | None = None) -> int:
    try:
        cfg = load_config(config_path, overrides)
        if subcommand not in RUNNERS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        dest = output_dir(cfg, out)
        payload, code = RUNNERS[subcommand](cfg, dest)
    except ConfigError as exc:
        print(f"solenoid: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if subcommand != "report":
        write_json(
            dest / f"{subcommand}.json",
            {"config": cfg, "format": FORMAT_VERSION, "result": payload, "exit_code": code},
        )
    if code == EXIT_BUDGET:
        print(f"solenoid: {subcommand}: budget exhausted, partial results written", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="solenoid", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"solenoid {__version__} (output format {FORMAT_VERSION})")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", "-c", help="JSON configuration file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a dotted config key, e.g. system.lambda=0.7")
    ap.add_argument("--out", "-o", help="output directory (default: config, then $OUTPUT_DIR)")
    ap.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    ap.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.threads is not None and args.threads < 1:
        print("solenoid: invalid configuration: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        try:
            sys.stdout.write(dumps(load_config(args.config, args.overrides)))
        except ConfigError as exc:
            print(f"solenoid: invalid configuration: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    if args.threads is not None:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            return run(args.subcommand, args.config, args.overrides, args.out)
    return run(args.subcommand, args.config, args.overrides, args.out)


if __name__ == "__main__":
    sys.exit(main())
