"""Command line entry point ``nls-steer``.

Every subcommand reads one flat JSON config, writes its outputs into
``--out`` and finishes with ``manifest.json`` indexing those outputs.
Exit status: 0 success, 2 configuration problem, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError, NoChainFound, NumericalFailure, SynthesisError
from .integrator import IntegratorConfig, integrate
from .lattice import ExtensionChain, ModeSet, is_saturating_within, plan_extension_chain, \
    closure_sequence
from .program import ControlProgram, constant_rate, sampled_rate
from .relaxation import PerturbationProbe, endpoint_deviation_study, relaxation_seminorm
from .state import SpectralState, energy, hs_norm, mass, read_state, write_state
from .steering import Projection, SteeringTask, steer_component, target_grid
from .storage import (SIGN_CONVENTION, RunManifest, config_hash, read_program_csv,
                      write_program, write_rows, write_trajectory)
from .synthesis import synthesize_chain

COMMANDS = ("saturate", "plan", "synthesize", "simulate", "steer", "relaxnorm", "sweep")

_mode = {"type": "array", "items": {"type": "integer"}, "minItems": 1}
_modes = {"type": "array", "items": _mode}
_complex = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["sign_convention", "time_unit"],
    "properties": {
        "sign_convention": {"const": SIGN_CONVENTION},
        "time_unit": {"const": "model"},
        "command": {"enum": list(COMMANDS)},
        "dim": {"type": "integer", "minimum": 1},
        "cutoff": {"type": "integer", "minimum": 1},
        "sobolev_s": {"type": "number"},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "eps_ladder": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                       "minItems": 1},
        "base": _modes,
        "targets": _modes,
        "observed": _modes,
        "window": {"type": "integer", "minimum": 0},
        "max_iter": {"type": "integer", "minimum": 0},
        "chain_file": {"type": "string"},
        "profile": {"enum": ["balanced", "boot"]},
        "ratio": {"type": "number", "exclusiveMinimum": 1},
        "samples": {"type": "integer", "minimum": 2},
        "stride": {"type": "integer", "minimum": 1},
        "initial_kind": {"enum": ["zero", "plane_wave", "modes", "file"]},
        "initial_modes": _modes,
        "initial_values": {"type": "array", "items": _complex},
        "initial_file": {"type": "string"},
        "forcing_modes": _modes,
        "forcing_values": {"type": "array", "items": _complex},
        "target_mode": _mode,
        "target_value": _complex,
        "target_values": {"type": "array", "items": _complex, "minItems": 1},
        "target_csv": {"type": "string"},
        "target_norm": {"type": "number", "exclusiveMinimum": 0},
        "n_targets": {"type": "integer", "minimum": 1},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "probe_kind": {"enum": ["source", "linear", "conjugate", "quadratic", "modulus"]},
        "probe_frequency": {"type": "number"},
        "probe_modes": _modes,
        "probe_values": {"type": "array", "items": _complex},
        "resolution": {"type": "integer", "minimum": 2},
    },
    "additionalProperties": False,
}

DEFAULTS = {"dim": 2, "cutoff": 8, "horizon": 1.0, "dt": 1e-3, "seed": 0, "window": 5,
            "profile": "balanced", "ratio": 3.5, "samples": 1024, "stride": 10,
            "initial_kind": "zero", "tolerance": 1e-2, "resolution": 2048}


def load_config(source) -> dict:
    """Validate a config (path or dict) and fill defaults."""
    if isinstance(source, (str, Path)):
        try:
            cfg = json.loads(Path(source).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {source}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    else:
        cfg = dict(source)
    if "outputs" in cfg and "config" in cfg:
        cfg = dict(cfg["config"])
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"schema violation at {list(exc.absolute_path)}: {exc.message}") from exc
    out = dict(DEFAULTS, **cfg)
    if "sobolev_s" not in out:
        out["sobolev_s"] = out["dim"] / 2 + 0.1
    if out["sobolev_s"] <= out["dim"] / 2:
        raise ConfigError(f"sobolev_s = {out['sobolev_s']} violates the regularity "
                          f"requirement s > d/2 = {out['dim'] / 2}")
    return out


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"missing config fields: {missing}")


def _modeset(cfg, key) -> ModeSet:
    _require(cfg, key)
    return ModeSet.of(cfg[key], cfg["dim"])


def _initial(cfg) -> SpectralState:
    kind = cfg["initial_kind"]
    dim, m, s = cfg["dim"], cfg["cutoff"], cfg["sobolev_s"]
    if kind == "zero":
        return SpectralState.zeros(dim, m, s)
    if kind == "file":
        _require(cfg, "initial_file")
        path = Path(cfg["initial_file"])
        if not path.with_suffix(".json").exists():
            raise ConfigError(f"initial state {path} not found")
        return read_state(path)
    _require(cfg, "initial_modes", "initial_values")
    vals = [complex(*v) for v in cfg["initial_values"]]
    if kind == "plane_wave" and len(vals) != 1:
        raise ConfigError("a plane wave has exactly one mode")
    return SpectralState.from_modes(dim, m, dict(zip(map(tuple, cfg["initial_modes"]), vals)), s)


def _chain(cfg) -> ExtensionChain:
    base = _modeset(cfg, "base")
    if "_chain" in cfg:
        return ExtensionChain.from_list(base, cfg["_chain"])
    if "chain_file" in cfg:
        path = Path(cfg["chain_file"])
        if not path.exists():
            raise ConfigError(f"upstream chain {path} not found; run 'plan' first")
        return ExtensionChain.from_list(base, json.loads(path.read_text()))
    _require(cfg, "targets")
    return plan_extension_chain(base, cfg["targets"], cfg["window"])


def _target_family(cfg, horizon) -> ControlProgram:
    if "target_csv" in cfg:
        _require(cfg, "target_mode")
        path = Path(cfg["target_csv"])
        if not path.exists():
            raise ConfigError(f"target signal {path} not found")
        t, v = read_program_csv(path)
        comp = sampled_rate(cfg["target_mode"], t, v)
    else:
        _require(cfg, "target_mode", "target_value")
        comp = constant_rate(cfg["target_mode"], complex(*cfg["target_value"]), 0.0, horizon)
    return ControlProgram(cfg["dim"], [comp], horizon)


def _write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True))
    return path


def cmd_saturate(cfg, out, workers):
    base = _modeset(cfg, "base")
    seq = closure_sequence(base, cfg["window"], cfg.get("max_iter"))
    ok, witness = is_saturating_within(base, cfg["window"], cfg.get("max_iter"))
    files = [_write_json(out / "saturation.json", {
        "saturating": ok, "witness": list(witness) if witness else None,
        "iterations": len(seq) - 1, "sizes": [len(k) for k in seq], "window": cfg["window"]}),
        _write_json(out / "closure.json", [list(k) for k in seq[-1].sorted()])]
    return files, {}


def cmd_plan(cfg, out, workers):
    chain = _chain({k: v for k, v in cfg.items() if k != "chain_file"})
    files = [_write_json(out / "chain.json", chain.to_list()),
             _write_json(out / "base.json", [list(k) for k in chain.base.sorted()])]
    return files, {"chain": chain.to_list()}


def cmd_synthesize(cfg, out, workers):
    _require(cfg, "eps")
    chain = _chain(cfg)
    family = _target_family(cfg, cfg["horizon"])
    res = synthesize_chain(chain, family, cfg["eps"], cfg["ratio"], cfg["profile"])
    files = write_program(res.program, out, cfg["samples"])
    desc = res.describe()
    desc["frequency_table"] = res.frequency_table()
    files.append(_write_json(out / "bundles.json", desc))
    notes = [n for b in res.bundles for n in b.diagnostics()]
    return files, {"chain": chain.to_list(), "eps_ladder": [cfg["eps"]], "diagnostics": notes}


def _forcing(cfg) -> ControlProgram | None:
    if "forcing_modes" not in cfg:
        return None
    _require(cfg, "forcing_values")
    comps = [constant_rate(k, complex(*v), 0.0, cfg["horizon"])
             for k, v in zip(cfg["forcing_modes"], cfg["forcing_values"])]
    return ControlProgram(cfg["dim"], comps, cfg["horizon"])


def cmd_simulate(cfg, out, workers):
    u0 = _initial(cfg)
    program = _forcing(cfg)
    extra = {}
    if "eps" in cfg and ("chain_file" in cfg or "targets" in cfg):
        chain = _chain(cfg)
        program = synthesize_chain(chain, _target_family(cfg, cfg["horizon"]), cfg["eps"],
                                   cfg["ratio"], cfg["profile"]).program
        extra = {"chain": chain.to_list(), "eps_ladder": [cfg["eps"]]}
    conf = (IntegratorConfig.for_program(program, dt=cfg["dt"], horizon=cfg["horizon"],
                                         stride=cfg["stride"])
            if program is not None else
            IntegratorConfig(dt=cfg["dt"], horizon=cfg["horizon"], stride=cfg["stride"]))
    traj = integrate(u0, program, conf)
    files = write_trajectory(traj, out)
    files += list(write_state(traj.final, out / "final_state"))
    rows = [(st.time, mass(st), energy(st), hs_norm(st)) for st in traj]
    files.append(write_rows(out / "diagnostics.csv", ["time", "mass", "energy", "hs_norm"], rows))
    extra["dt"] = conf.step
    return files, extra


def cmd_steer(cfg, out, workers):
    _require(cfg, "observed", "eps_ladder")
    base = _modeset(cfg, "base")
    observed = _modeset(cfg, "observed")
    chain = None
    if not observed.members <= base.members:
        if "chain_file" not in cfg:
            raise ConfigError("observed modes lie outside the base; run 'plan' and set chain_file")
        chain = _chain(cfg)
        if not observed.members <= chain.final.members:
            raise ConfigError("the supplied chain does not reach the observed set")
    u0 = _initial(cfg)
    targets = target_grid(observed, cfg.get("target_norm", 0.1), cfg.get("n_targets", 8),
                          cfg["seed"], cfg["sobolev_s"])
    task = SteeringTask(u0, targets, Projection(modes=observed), cfg["horizon"], cfg["tolerance"])
    rep = steer_component(task, base, cfg["eps_ladder"], cfg["ratio"], cfg["profile"],
                          chain=chain)
    files = [_write_json(out / "coverage.json", rep.to_dict())]
    (out / "coverage.csv").write_text(rep.to_csv())
    files.append(out / "coverage.csv")
    return files, {"chain": rep.chain, "eps_ladder": cfg["eps_ladder"], "diagnostics": rep.notes}


def cmd_relaxnorm(cfg, out, workers):
    _require(cfg, "eps_ladder", "probe_modes", "probe_values")
    profile = dict(zip(map(tuple, cfg["probe_modes"]), (complex(*v) for v in cfg["probe_values"])))
    kind = cfg.get("probe_kind", "linear")
    freq = cfg.get("probe_frequency", 1.0)
    make = lambda e: PerturbationProbe(e, profile, kind, freq)
    u0 = _initial(cfg)
    if np.any(u0.coeffs) or kind != "source":
        rep = endpoint_deviation_study(u0, None, make, cfg["eps_ladder"], cfg["horizon"],
                                       resolution=cfg["resolution"])
        data = rep.to_dict()
        csv_text = rep.to_csv()
    else:
        norms = [relaxation_seminorm(make(e), cfg["horizon"], cfg["resolution"],
                                     cutoff=cfg["cutoff"], s=cfg["sobolev_s"])
                 for e in cfg["eps_ladder"]]
        data = {"eps": cfg["eps_ladder"], "seminorms": norms, "resolution": cfg["resolution"]}
        csv_text = "eps,seminorm\n" + "".join(f"{e!r},{n!r}\n" for e, n in zip(cfg["eps_ladder"], norms))
    files = [_write_json(out / "seminorm.json", data)]
    (out / "seminorm.csv").write_text(csv_text)
    files.append(out / "seminorm.csv")
    return files, {"eps_ladder": cfg["eps_ladder"]}


def _sweep_job(cfg: dict, eps: float, value) -> dict:
    """One resonance run: synthesized versus direct forcing from the same initial state."""
    cfg = dict(cfg, target_value=list(value))
    chain = _chain(cfg)
    family = _target_family(cfg, cfg["horizon"])
    u0 = _initial(cfg)
    ref = integrate(u0, family, IntegratorConfig(dt=cfg["dt"], horizon=cfg["horizon"])).final
    res = synthesize_chain(chain, family, eps, cfg["ratio"], cfg["profile"])
    final = integrate(u0, res.program, IntegratorConfig.for_program(res.program, dt=cfg["dt"])).final
    b = res.bundles[0] if res.bundles else None
    return {"eps": eps, "target_re": value[0], "target_im": value[1],
            "error": hs_norm(final - ref), "residual": res.residual,
            "N": b.N if b else 0, "upsilon_end": b.upsilon_end if b else 0.0,
            "coeffs": final.coeffs, "time": final.time}


SWEEP_COLUMNS = ["eps", "target_re", "target_im", "error", "residual", "N", "upsilon_end"]


def cmd_sweep(cfg, out, workers):
    """Cross product of the eps ladder with the target values, one job each."""
    _require(cfg, "eps_ladder")
    values = cfg.get("target_values") or [cfg.get("target_value", [0.0, 0.0])]
    jobs = [(float(e), tuple(v)) for v in values for e in cfg["eps_ladder"]]
    chain = _chain(cfg)
    cfg = {k: v for k, v in cfg.items() if k not in ("targets", "chain_file")}
    cfg["base"] = [list(k) for k in chain.base.sorted()]
    cfg["_chain"] = chain.to_list()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, [cfg] * len(jobs), *zip(*jobs)))
    else:
        results = [_sweep_job(cfg, e, v) for e, v in jobs]
    files = []
    for i, r in enumerate(results):
        run_dir = out / f"run_{i:03d}"
        run_dir.mkdir(exist_ok=True)
        st = SpectralState(cfg["dim"], cfg["cutoff"], r["coeffs"], cfg["sobolev_s"], r["time"])
        files += list(write_state(st, run_dir / "final_state"))
        files.append(_write_json(run_dir / "summary.json", {k: r[k] for k in SWEEP_COLUMNS}))
    rows = [tuple(r[k] for k in SWEEP_COLUMNS) for r in results]
    files.append(write_rows(out / "ladder.csv", SWEEP_COLUMNS, rows))
    return files, {"chain": chain.to_list(), "eps_ladder": sorted(set(e for e, _ in jobs),
                                                                  reverse=True)}


HANDLERS = {"saturate": cmd_saturate, "plan": cmd_plan, "synthesize": cmd_synthesize,
            "simulate": cmd_simulate, "steer": cmd_steer, "relaxnorm": cmd_relaxnorm,
            "sweep": cmd_sweep}


def default_workers() -> int:
    raw = os.environ.get("NLS_STEER_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"NLS_STEER_WORKERS must be an integer, got {raw!r}") from exc


def run(config, command: str | None = None, out=".", workers: int | None = None) -> RunManifest:
    """Validate ``config``, dispatch ``command`` and write the manifest."""
    cfg = load_config(config)
    command = command or cfg.get("command")
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}; choose from {COMMANDS}")
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {command!r}")
    workers = default_workers() if workers is None else workers
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files, extra = HANDLERS[command](cfg, out, workers)
    manifest = RunManifest(
        command=command, config_hash=config_hash(cfg),
        discretization={"dim": cfg["dim"], "cutoff": cfg["cutoff"], "s": cfg["sobolev_s"],
                        "dt": extra.get("dt", cfg["dt"])},
        eps_ladder=list(extra.get("eps_ladder", cfg.get("eps_ladder", []))),
        chain=extra.get("chain", []), diagnostics=extra.get("diagnostics", []),
        config=dict(cfg, command=command))
    manifest.index(files, out)
    manifest.write(out)
    return manifest


def verify_rerun(previous, out, workers: int | None = None) -> list:
    """Re-run the manifest in directory ``previous`` into ``out``.

    Returns the output paths whose digests differ; empty means the run is
    reproduced byte for byte.
    """
    old = RunManifest.read(previous)
    new = run(old.config, old.command, out, workers)
    before, after = old.digests(), new.digests()
    return sorted(p for p in before.keys() | after.keys() if before.get(p) != after.get(p))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nls-steer", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel jobs (default: $NLS_STEER_WORKERS or 1)")
    args = parser.parse_args(argv)
    try:
        manifest = run(args.config, args.command, args.out, args.workers)
    except (ConfigError, jsonschema.ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, SynthesisError, NoChainFound, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({"command": manifest.command, "outputs": len(manifest.outputs)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
