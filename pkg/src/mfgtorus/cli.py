"""Configuration parsing, run orchestration and reproducible manifests.

Configs are plain ``key = value`` text with ``#`` comments. Every run
owns an output directory and writes a manifest (JSON, stable key order)
listing the resolved configuration, per-stage residuals and a digest
inventory of produced files; the manifest lands atomically even when the
run fails. Exit status 2 is reserved for solver non-convergence, which
is a legitimate scientific outcome, while 1 signals usage or internal
errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError, ConvergenceError, SolverError
from .grid import Mollifier, ScalarField, TorusGrid, dump_field, integrate, load_field
from .mfg import (
    MFGProblem,
    MFGSolution,
    solve_fixed_point,
    sweep_alpha,
)
from .model import (
    DEFOCUSING,
    FOCUSING,
    CouplingSpec,
    HamiltonianSpec,
    PotentialSpec,
    cosine_potential,
    critical_exponents,
    zero_potential,
)
from .validation import (
    energy_report,
    hopf_cole_forward,
    nls_residual,
    pohozaev_residual,
    simulate_particles,
)

logger = logging.getLogger(__name__)

MODES = ("solve", "sweep", "validate", "particles", "pohozaev")

# key: (type tag, default, validator description)
_SCHEMA = {
    "mode": ("str", None),
    "dim": ("int", 1),
    "n": ("int", 128),
    "gamma": ("float", 2.0),
    "alpha": ("float", 1.0),
    "c_f": ("float", 1.0),
    "sign": ("str", FOCUSING),
    "potential": ("str", "zero"),
    "mollifier_k": ("int", None),
    "theta": ("float", 0.5),
    "outer_tol": ("float", 1e-7),
    "outer_max_iters": ("int", 300),
    "hjb_tol": ("float", None),
    "hjb_dt": ("float", None),
    "hjb_max_steps": ("int", 400_000),
    "fp_tol": ("float", 1e-12),
    "fp_max_iters": ("int", 50),
    "m0": ("str", "uniform"),
    "sweep_alphas": ("str", ""),
    "sweep_refine": ("bool", False),
    "particles_count": ("int", 100_000),
    "particles_horizon": ("float", 50.0),
    "particles_dt": ("float", 1e-3),
    "ball_radius": ("float", 0.25),
    "ball_center": ("str", ""),
    "nls_tol": ("float", 1e-9),
    "input_dir": ("str", ""),
    "run_id": ("str", "run"),
}


@dataclass
class RunConfig:
    values: dict
    notes: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]


def _convert(key: str, raw: str):
    kind = _SCHEMA[key][0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"key '{key}': cannot parse {raw!r} as {kind}") from None


def _validate(cfg: dict, notes: list):
    if cfg["mode"] is None:
        raise ConfigError("missing mode: one of " + ", ".join(MODES))
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg['mode']!r}")
    if cfg["dim"] not in (1, 2):
        raise ConfigError(f"dim must be 1 or 2, got {cfg['dim']}")
    if cfg["n"] < 8:
        raise ConfigError(f"n must be at least 8, got {cfg['n']}")
    if not cfg["gamma"] > 1:
        raise ConfigError(f"gamma must exceed 1, got {cfg['gamma']} (admissible: gamma > 1)")
    if not cfg["alpha"] > 0:
        raise ConfigError(f"alpha must be positive, got {cfg['alpha']}")
    if not cfg["c_f"] > 0:
        raise ConfigError(f"c_f must be positive, got {cfg['c_f']}")
    if cfg["sign"] not in (FOCUSING, DEFOCUSING):
        raise ConfigError(f"sign must be focusing or defocusing, got {cfg['sign']!r}")
    if not 0 < cfg["theta"] <= 1:
        raise ConfigError(f"theta must lie in (0, 1], got {cfg['theta']}")
    if cfg["mollifier_k"] is None:
        cfg["mollifier_k"] = max(2, cfg["n"] // 8)
    if cfg["mollifier_k"] < 2:
        raise ConfigError(f"mollifier_k must be at least 2, got {cfg['mollifier_k']}")
    for key in ("outer_tol", "fp_tol", "nls_tol", "particles_dt", "particles_horizon"):
        if not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive, got {cfg[key]}")
    if cfg["hjb_dt"] is not None and not cfg["hjb_dt"] > 0:
        raise ConfigError(f"hjb_dt must be positive, got {cfg['hjb_dt']}")
    if not 0 < cfg["ball_radius"] <= 0.45:
        raise ConfigError(f"ball_radius must lie in (0, 0.45], got {cfg['ball_radius']}")
    _parse_potential(cfg["potential"])  # raises on malformed specs
    exps = critical_exponents(cfg["gamma"], cfg["dim"])
    if np.isfinite(exps.alpha2) and cfg["alpha"] == exps.alpha2:
        note = (f"UNKNOWN-REGIME: alpha = {cfg['alpha']} sits exactly at the second "
                f"critical exponent {exps.alpha2}")
        notes.append(note)
        logger.warning(note)


def parse_config(text: str, mode: str = None) -> RunConfig:
    """Parse ``key = value`` lines into a validated configuration.

    Unknown keys, malformed values and out-of-range parameters raise
    :class:`ConfigError` naming the key and its admissible range.
    """
    cfg = {k: spec[1] for k, spec in _SCHEMA.items()}
    if mode is not None:
        cfg["mode"] = mode
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cfg[key] = _convert(key, raw)
    notes: list = []
    _validate(cfg, notes)
    return RunConfig(values=cfg, notes=notes)


def _parse_potential(spec: str) -> PotentialSpec:
    if spec == "zero":
        return zero_potential()
    if spec.startswith("cosine:"):
        parts = spec.split(":", 1)[1].split(",")
        try:
            amplitude = float(parts[0])
            modes = int(parts[1]) if len(parts) > 1 else 1
        except (ValueError, IndexError):
            raise ConfigError(f"malformed potential {spec!r}; expected cosine:a[,modes]") from None
        return cosine_potential(amplitude, modes)
    if spec.startswith("file:"):
        path = spec.split(":", 1)[1]
        if not path:
            raise ConfigError("potential file path is empty")
        f = load_field(path)
        return PotentialSpec(f, float(f.values.max()))
    raise ConfigError(f"potential must be zero, cosine:a[,modes] or file:path, got {spec!r}")


def problem_from_config(cfg: RunConfig) -> MFGProblem:
    v = cfg.values
    grid = TorusGrid(v["dim"], v["n"])
    return MFGProblem(
        grid=grid,
        hamiltonian=HamiltonianSpec(v["gamma"]),
        coupling=CouplingSpec(v["alpha"], v["c_f"], v["sign"]),
        potential=_parse_potential(v["potential"]),
        mollifier=Mollifier(v["mollifier_k"]),
        theta=v["theta"],
        tol=v["outer_tol"],
        max_outer_iters=v["outer_max_iters"],
        hjb_dt=v["hjb_dt"],
        hjb_tol=v["hjb_tol"],
        hjb_max_steps=v["hjb_max_steps"],
        fp_tol=v["fp_tol"],
        fp_max_iters=v["fp_max_iters"],
    )


def _m0_function(cfg: RunConfig):
    spec = cfg.values["m0"]
    if spec == "uniform":
        return None
    if spec.startswith("bump:"):
        try:
            amp = float(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"malformed m0 {spec!r}; expected bump:amplitude") from None

        def fn(*coords):
            prof = np.ones_like(coords[0])
            for x in coords:
                prof = prof * ((1.0 + np.cos(2.0 * np.pi * (x - 0.5))) / 2.0) ** 4
            return 1.0 + amp * prof

        return fn
    raise ConfigError(f"m0 must be uniform or bump:amplitude, got {spec!r}")


def _initial_density(cfg: RunConfig, grid: TorusGrid):
    fn = _m0_function(cfg)
    if fn is None:
        return None
    f = ScalarField.from_function(grid, fn)
    return ScalarField(grid, f.values / integrate(f))


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sanitize(obj):
    """Map non-finite floats to null so emitted JSON stays standard."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _sanitize(obj.item())
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def _write_json(path: str, payload: dict):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(_sanitize(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _write_manifest(outdir: str, manifest: dict):
    _write_json(os.path.join(outdir, "manifest.json"), manifest)


def _inventory(outdir: str, names: list) -> dict:
    inv = {}
    for name in names:
        path = os.path.join(outdir, name)
        inv[name] = {"sha256": _sha256(path), "bytes": os.path.getsize(path)}
    return inv


def _load_run(input_dir: str):
    with open(os.path.join(input_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg = RunConfig(values=dict(manifest["config"]))
    problem = problem_from_config(cfg)
    u = load_field(os.path.join(input_dir, "u.csv"))
    m = load_field(os.path.join(input_dir, "m.csv"))
    lam = manifest["results"]["lambda"]
    sol = MFGSolution(problem=problem, u=u, lam=lam, m=m,
                      outer_iters=manifest["results"].get("outer_iters", 0),
                      hjb_res=manifest["results"].get("hjb_res", float("nan")),
                      fp_res=manifest["results"].get("fp_res", float("nan")),
                      coupling_res=manifest["results"].get("coupling_res", float("nan")),
                      converged=manifest["results"].get("converged", True))
    return cfg, problem, sol


def run(cfg: RunConfig, output_dir: str, seed: int = 0) -> int:
    """Dispatch a validated configuration and write its artifacts."""
    os.makedirs(output_dir, exist_ok=True)
    started = time.time()
    manifest = {
        "artifact": {"name": "mfgtorus", "version": __version__},
        "config": cfg.values,
        "mode": cfg.values["mode"],
        "seed": seed,
        "notes": cfg.notes,
        "status": "error",
        "failure": None,
        "results": {},
        "outputs": {},
        "timing": {"started": _iso(started)},
    }
    status = 1
    try:
        status = _dispatch(cfg, output_dir, seed, manifest)
        manifest["status"] = {0: "ok", 2: "nonconverged"}.get(status, "error")
    except ConvergenceError as exc:
        # an iteration running out of budget is data, not a crash
        manifest["failure"] = f"{type(exc).__name__}: {exc}"
        manifest["status"] = "nonconverged"
        logger.warning("solver did not converge: %s", exc)
        status = 2
    except (SolverError, ConfigError, OSError, ValueError) as exc:
        manifest["failure"] = f"{type(exc).__name__}: {exc}"
        logger.error("run failed: %s", exc)
        status = 1
    finally:
        finished = time.time()
        manifest["timing"]["finished"] = _iso(finished)
        manifest["timing"]["wall_time_s"] = finished - started
        _write_manifest(output_dir, manifest)
    return status


def _iso(t: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(t)) + "Z"


def _dispatch(cfg: RunConfig, outdir: str, seed: int, manifest: dict) -> int:
    mode = cfg.values["mode"]
    if mode == "solve":
        return _run_solve(cfg, outdir, manifest)
    if mode == "sweep":
        return _run_sweep(cfg, outdir, manifest)
    if mode == "validate":
        return _run_validate(cfg, outdir, manifest)
    if mode == "particles":
        return _run_particles(cfg, outdir, seed, manifest)
    if mode == "pohozaev":
        return _run_pohozaev(cfg, outdir, manifest)
    raise ConfigError(f"unhandled mode {mode!r}")


def _run_solve(cfg: RunConfig, outdir: str, manifest: dict) -> int:
    problem = problem_from_config(cfg)
    sol = solve_fixed_point(problem, _initial_density(cfg, problem.grid))
    dump_field(sol.u, os.path.join(outdir, "u.csv"))
    dump_field(sol.m, os.path.join(outdir, "m.csv"))
    manifest["results"] = {
        "lambda": sol.lam,
        "converged": sol.converged,
        "diverged": sol.diverged,
        "outer_iters": sol.outer_iters,
        "hjb_res": sol.hjb_res,
        "fp_res": sol.fp_res,
        "coupling_res": sol.coupling_res,
        "max_m": float(np.nanmax(sol.m.values)),
    }
    manifest["outputs"] = _inventory(outdir, ["u.csv", "m.csv"])
    return 0 if sol.converged else 2


def _run_sweep(cfg: RunConfig, outdir: str, manifest: dict) -> int:
    template = problem_from_config(cfg)
    alphas = [float(a) for a in cfg.values["sweep_alphas"].split(",") if a.strip()]
    if not alphas:
        raise ConfigError("sweep_alphas must list at least one exponent")
    report = sweep_alpha(template, alphas, refine=cfg.values["sweep_refine"],
                         m0_fn=_m0_function(cfg))
    rows = [dataclasses.asdict(r) for r in report.rows]
    payload = {
        "rows": rows,
        "n": report.n,
        "dim": report.dim,
        "gamma": report.gamma,
        "alpha1": report.alpha1,
        "alpha2": None if not np.isfinite(report.alpha2) else report.alpha2,
    }
    _write_json(os.path.join(outdir, "sweep.json"), payload)
    manifest["results"] = {"rows": len(rows),
                           "converged_rows": sum(1 for r in report.rows if r.converged),
                           "lambda": None}
    manifest["outputs"] = _inventory(outdir, ["sweep.json"])
    return 0


def _run_validate(cfg: RunConfig, outdir: str, manifest: dict) -> int:
    if not cfg.values["input_dir"]:
        raise ConfigError("validate mode requires input_dir")
    run_cfg, problem, sol = _load_run(cfg.values["input_dir"])
    rep = energy_report(sol, problem.coupling, problem.hamiltonian)
    payload = {
        "energy": {
            "E_conj": rep.E_conj, "E_gamma": rep.E_gamma,
            "mass_power": rep.mass_power, "lambda": rep.lam,
            "lbeta_norms": {str(k): v for k, v in rep.lbeta_norms.items()},
        }
    }
    poh = pohozaev_residual(sol, problem.coupling, problem.potential,
                            cfg.values["ball_radius"], _ball_center(cfg, problem.grid))
    payload["pohozaev"] = dataclasses.asdict(poh)
    if problem.hamiltonian.gamma == 2.0:
        phi = hopf_cole_forward(sol)
        payload["hopf_cole"] = {
            "nls_residual": nls_residual(phi, sol.lam, problem.coupling, problem.potential),
            "phi_mass": integrate(ScalarField(phi.grid, phi.values**2)),
        }
    _write_json(os.path.join(outdir, "validate_report.json"), payload)
    manifest["results"] = {"lambda": sol.lam, "pohozaev_residual": poh.residual}
    manifest["outputs"] = _inventory(outdir, ["validate_report.json"])
    return 0


def _ball_center(cfg: RunConfig, grid: TorusGrid):
    raw = cfg.values["ball_center"]
    if not raw:
        return None
    parts = [float(p) for p in raw.split(",")]
    if len(parts) != grid.dim:
        raise ConfigError(f"ball_center needs {grid.dim} coordinates, got {len(parts)}")
    return tuple(parts)


def _run_particles(cfg: RunConfig, outdir: str, seed: int, manifest: dict) -> int:
    if not cfg.values["input_dir"]:
        raise ConfigError("particles mode requires input_dir")
    _, problem, sol = _load_run(cfg.values["input_dir"])
    rep = simulate_particles(sol, problem.hamiltonian, cfg.values["particles_count"],
                             cfg.values["particles_horizon"], cfg.values["particles_dt"],
                             seed)
    dump_field(rep.density, os.path.join(outdir, "histogram.csv"))
    payload = {"l1_distance": rep.l1_distance, "count": rep.count,
               "horizon": rep.horizon, "dt": rep.dt, "seed": rep.seed,
               "backend": rep.backend}
    _write_json(os.path.join(outdir, "particles_report.json"), payload)
    manifest["results"] = {"lambda": sol.lam, "l1_distance": rep.l1_distance}
    manifest["outputs"] = _inventory(outdir, ["histogram.csv", "particles_report.json"])
    return 0


def _run_pohozaev(cfg: RunConfig, outdir: str, manifest: dict) -> int:
    if not cfg.values["input_dir"]:
        raise ConfigError("pohozaev mode requires input_dir")
    _, problem, sol = _load_run(cfg.values["input_dir"])
    poh = pohozaev_residual(sol, problem.coupling, problem.potential,
                            cfg.values["ball_radius"], _ball_center(cfg, problem.grid))
    _write_json(os.path.join(outdir, "pohozaev_report.json"), dataclasses.asdict(poh))
    manifest["results"] = {"lambda": sol.lam, "pohozaev_residual": poh.residual}
    manifest["outputs"] = _inventory(outdir, ["pohozaev_report.json"])
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mfgtorus",
                                     description="stationary mean field games on the torus")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command")
    for name in MODES:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--output", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        if name == "particles":
            p.add_argument("--count", type=int, default=None,
                           help="override particles_count")
            p.add_argument("--horizon", type=float, default=None,
                           help="override particles_horizon")
            p.add_argument("--dt", type=float, default=None,
                           help="override particles_dt")
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = ""
        if args.config:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        cfg = parse_config(text, mode=args.command)
        if cfg.values["mode"] != args.command:
            raise ConfigError(
                f"config mode {cfg.values['mode']!r} conflicts with subcommand {args.command!r}"
            )
        overrides = {"count": "particles_count", "horizon": "particles_horizon",
                     "dt": "particles_dt"}
        for flag, key in overrides.items():
            value = getattr(args, flag, None)
            if value is not None:
                if not value > 0:
                    raise ConfigError(f"--{flag} must be positive, got {value}")
                cfg.values[key] = value
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    output = args.output or os.path.join("runs", cfg.values["run_id"])
    return run(cfg, output, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
