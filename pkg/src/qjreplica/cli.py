"""Command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 invalid configuration,
3 file I/O failure, 4 tolerance breach in ``compare``.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import NumericalError

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG, EXIT_IO, EXIT_TOLERANCE = 0, 1, 2, 3, 4

COMMANDS = ("trajectory", "ensemble", "lindblad", "compare", "oracle", "classify", "rgflow", "coefficients")

DEFAULTS = {
    "J": 1.0,
    "eta": 0.5,
    "h": 0.0,
    "gamma": 0.5,
    "L": 32,
    "boundary": "periodic",
    "dt": 1e-3,
    "t_final": 1.0,
    "n_traj": 100,
    "workers": 1,
    "master_seed": 42,
    "scheme": "exact_waiting_time",
    "R": 1,
    "g0": 0.1,
    "lnL_max": 8 * math.pi,
    "steps": 1000,
    "rho": 0.5,
    "format": "csv",
    "compare_sigma": 4.0,
}

_number = {"type": "number"}
SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "J": _number,
        "eta": _number,
        "h": _number,
        "gamma": {"type": "number", "minimum": 0},
        "L": {"type": "integer", "minimum": 1},
        "boundary": {"enum": ["periodic", "open"]},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "t_final": {"type": "number", "exclusiveMinimum": 0},
        "sample_times": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "n_traj": {"type": "integer", "minimum": 2},
        "workers": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "scheme": {"enum": ["euler_poisson", "exact_waiting_time"]},
        "occupations": {"type": "array", "items": {"enum": [0, 1]}},
        "R": {"type": "number", "exclusiveMinimum": 0},
        "g0": {"type": "number", "minimum": 0},
        "lnL_max": {"type": "number", "exclusiveMinimum": 0},
        "steps": {"type": "integer", "minimum": 1},
        "rho": {"type": "number", "minimum": 0, "maximum": 1},
        "J_nonzero": {"type": "boolean"},
        "eta_nonzero": {"type": "boolean"},
        "gamma_nonzero": {"type": "boolean"},
        "out": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
        "compare_sigma": {"type": "number", "exclusiveMinimum": 0},
    },
}


class ConfigError(Exception):
    pass


class OutputError(Exception):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qjreplica", description=__doc__.splitlines()[0])
    p.add_argument("command_pos", nargs="?", choices=COMMANDS, metavar="COMMAND", help="one of " + ", ".join(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--L", type=int)
    p.add_argument("--J", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--boundary", choices=["periodic", "open"])
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--sample-times", dest="sample_times", type=lambda s: [float(x) for x in s.split(",")])
    p.add_argument("--n-traj", dest="n_traj", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--master-seed", dest="master_seed", type=int)
    p.add_argument("--scheme", choices=["euler_poisson", "exact_waiting_time"])
    p.add_argument("--R", type=float)
    p.add_argument("--g0", type=float)
    p.add_argument("--lnL-max", dest="lnL_max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--compare-sigma", dest="compare_sigma", type=float)
    for flag in ("J_nonzero", "eta_nonzero", "gamma_nonzero"):
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=lambda s: s.lower() in ("1", "true", "yes"))
    p.add_argument("--out", help="output path prefix; stdout if omitted")
    p.add_argument("--format", choices=["csv", "json"])
    return p


def parse_config(argv: list[str] | None = None) -> dict:
    """Merge defaults, the config file and flags (flags win) and validate.

    Raises
    ------
    ConfigError
        Malformed JSON or schema violation.
    OSError
        Unreadable config file.
    """
    args = build_parser().parse_args(argv)
    file_cfg: dict = {}
    if args.config is not None:
        text = args.config.read_text(encoding="utf-8")
        try:
            file_cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config root must be a JSON object")
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command_pos")}
    if args.command_pos is not None and "command" not in flags:
        flags["command"] = args.command_pos
    cfg = dict(file_cfg)
    cfg.update(flags)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        if err.validator == "additionalProperties":
            path = ",".join(sorted(set(err.instance) - set(SCHEMA["properties"])))
        raise ConfigError(f"config error at {path}: {err.message}")
    merged = dict(DEFAULTS)
    merged.update(cfg)
    return merged


def content_hash(body: bytes) -> str:
    """Git-style blob SHA-1 of the output body."""
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _header_config(cfg: dict) -> dict:
    # the destination does not affect results, so reruns into another path stay byte-identical
    return {k: cfg[k] for k in sorted(cfg) if k != "out"}


def render_csv(cfg: dict, body: str) -> str:
    data = body.encode()
    lines = [
        f"# qjreplica {__version__}",
        f"# config: {json.dumps(_header_config(cfg), sort_keys=True)}",
        f"# master_seed: {cfg['master_seed']}",
        f"# content_sha1: {content_hash(data)}",
    ]
    return "\n".join(lines) + "\n" + body


def render_json(cfg: dict, payload) -> str:
    body = json.dumps(payload, sort_keys=True)
    header = {
        "version": __version__,
        "config": _header_config(cfg),
        "master_seed": cfg["master_seed"],
        "content_sha1": content_hash(body.encode()),
    }
    return json.dumps({"header": header, "data": payload}, sort_keys=True, indent=1) + "\n"


class Emitter:
    """Collects named outputs and writes them after the computation succeeds."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.files: dict[str, str] = {}

    def csv(self, name: str, columns: list[str], rows) -> None:
        buf = io.StringIO()
        buf.write(",".join(columns) + "\n")
        for row in rows:
            buf.write(",".join(v if isinstance(v, str) else str(v) if isinstance(v, (int, np.integer)) else _fmt(v) for v in row) + "\n")
        self.files[name + ".csv"] = render_csv(self.cfg, buf.getvalue())

    def json(self, name: str, payload) -> None:
        self.files[name + ".json"] = render_json(self.cfg, payload)

    def jsonl(self, name: str, records) -> None:
        body = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
        self.files[name + ".jsonl"] = render_csv(self.cfg, body)

    def write(self, out: str | None, stream=None) -> None:
        stream = stream if stream is not None else sys.stdout
        if out is None:
            for name, text in self.files.items():
                stream.write(f"## {name}\n{text}")
            return
        try:
            for name, text in self.files.items():
                Path(f"{out}_{name}").write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OutputError(str(exc)) from exc


def _params(cfg: dict):
    from .model import ModelParams

    return ModelParams(J=cfg["J"], eta=cfg["eta"], h=cfg["h"], gamma=cfg["gamma"], L=cfg["L"], boundary=cfg["boundary"])


def _trajectory_config(cfg: dict):
    from .trajectory import TrajectoryConfig

    return TrajectoryConfig(
        params=_params(cfg),
        dt=cfg["dt"],
        t_final=cfg["t_final"],
        scheme=cfg["scheme"],
        sample_times=tuple(cfg.get("sample_times", ())),
        master_seed=cfg["master_seed"],
        occupations=tuple(cfg["occupations"]) if "occupations" in cfg else None,
    )


def cmd_trajectory(cfg: dict, em: Emitter, log) -> int:
    from .trajectory import run_trajectory

    result, record = run_trajectory(_trajectory_config(cfg), 0)
    if cfg["format"] == "json":
        em.json("trajectory", {
            "times": result.times.tolist(),
            "density": result.density.tolist(),
            "entropy_halfchain": result.entropy.tolist(),
            "record": record.to_json(),
        })
    else:
        em.csv("density", ["trajectory_index", "t", "site", "density"],
               ((0, t, j + 1, result.density[i, j]) for i, t in enumerate(result.times) for j in range(result.density.shape[1])))
        em.csv("entropy", ["trajectory_index", "t", "entropy_halfchain"], ((0, t, s) for t, s in zip(result.times, result.entropy)))
        em.jsonl("jumps", [record.to_json()])
    log(f"trajectory: {len(record.events)} jumps, log_norm {record.log_norm:.6g}")
    return EXIT_OK


def _run_ensemble(cfg: dict):
    from .trajectory import run_ensemble

    return run_ensemble(_trajectory_config(cfg), cfg["n_traj"], cfg["workers"], keep_trajectories=True)


def cmd_ensemble(cfg: dict, em: Emitter, log) -> int:
    stats = _run_ensemble(cfg)
    if cfg["format"] == "json":
        em.json("ensemble", {
            "times": stats.times.tolist(),
            "density_mean": stats.density_mean.tolist(),
            "density_stderr": stats.density_stderr.tolist(),
            "entropy_mean": stats.entropy_mean.tolist(),
            "entropy_stderr": stats.entropy_stderr.tolist(),
            "number_mean": stats.number_mean.tolist(),
            "number_stderr": stats.number_stderr.tolist(),
            "n_traj": stats.n_traj,
        })
    else:
        em.csv("density", ["trajectory_index", "t", "site", "density"],
               ((k, t, j + 1, r.density[i, j]) for k, r in enumerate(stats.trajectories)
                for i, t in enumerate(r.times) for j in range(r.density.shape[1])))
        em.csv("entropy", ["trajectory_index", "t", "entropy_halfchain"],
               ((k, t, s) for k, r in enumerate(stats.trajectories) for t, s in zip(r.times, r.entropy)))
        em.csv("ensemble", ["t", "site", "density_mean", "density_stderr"],
               ((t, j + 1, stats.density_mean[i, j], stats.density_stderr[i, j])
                for i, t in enumerate(stats.times) for j in range(stats.density_mean.shape[1])))
        em.jsonl("jumps", [rec.to_json() for rec in stats.records])
    log(f"ensemble: {stats.n_traj} trajectories, mean jumps {stats.jump_counts.mean():.6g}")
    return EXIT_OK


def _moment_series(cfg: dict):
    from .gaussian import neel_occupations
    from .lindblad import MomentState, moment_trajectory

    params = _params(cfg)
    occ = cfg.get("occupations") or neel_occupations(params.L)
    times = cfg.get("sample_times") or [cfg["t_final"]]
    return times, moment_trajectory(MomentState.from_occupations(occ), times, params)


def cmd_lindblad(cfg: dict, em: Emitter, log) -> int:
    times, states = _moment_series(cfg)
    if cfg["format"] == "json":
        em.json("moments", [{"t": t, "C_re": s.C.real.tolist(), "C_im": s.C.imag.tolist(),
                             "F_re": s.F.real.tolist(), "F_im": s.F.imag.tolist()} for t, s in zip(times, states)])
    else:
        L = states[0].C.shape[0]
        em.csv("moments", ["t", "i", "j", "ReC", "ImC", "ReF", "ImF"],
               ((t, i + 1, j + 1, s.C[i, j].real, s.C[i, j].imag, s.F[i, j].real, s.F[i, j].imag)
                for t, s in zip(times, states) for i in range(L) for j in range(L)))
    log(f"lindblad: {len(times)} sample times")
    return EXIT_OK


def cmd_compare(cfg: dict, em: Emitter, log) -> int:
    stats = _run_ensemble(cfg)
    times, states = _moment_series(cfg)
    rows, worst = [], 0.0
    for i, (t, s) in enumerate(zip(times, states)):
        ref = np.diagonal(s.C).real
        for j in range(ref.size):
            mean, se = stats.density_mean[i, j], stats.density_stderr[i, j]
            z = abs(mean - ref[j]) / se if se > 0 else (0.0 if abs(mean - ref[j]) < 1e-12 else math.inf)
            worst = max(worst, z)
            rows.append((t, j + 1, mean, se, ref[j], z))
    em.csv("compare", ["t", "site", "density_mean", "density_stderr", "lindblad", "z"], rows)
    limit = cfg["compare_sigma"]
    log(f"compare: max |mean - lindblad|/stderr = {worst:.6g} (limit {limit:g})")
    return EXIT_OK if worst <= limit else EXIT_TOLERANCE


def cmd_oracle(cfg: dict, em: Emitter, log) -> int:
    from .exactsmall import (ReplicatedDensity, density_matrix_json, evolve_replicated, mc_deviation,
                             mc_replicated_average, occupation_state, replicated_initial)
    from .gaussian import neel_occupations

    params = _params(cfg)
    R = int(cfg["R"])
    if R != cfg["R"]:
        raise ConfigError("config error at R: oracle needs an integer replica count")
    occ = cfg.get("occupations") or neel_occupations(params.L)
    psi = occupation_state(occ)
    mc = mc_replicated_average(params, R, cfg["n_traj"], cfg["t_final"], cfg["master_seed"], psi)
    start = ReplicatedDensity(replicated_initial(psi.psi, R), R, params.L)
    ref = evolve_replicated(start, cfg["t_final"], cfg["dt"], params, richardson=True)
    max_z, max_abs = mc_deviation(mc, ref.rho)
    em.json("oracle", {
        "replicated": json.loads(density_matrix_json(ref.rho, R=R, L=params.L)),
        "mc_mean": json.loads(density_matrix_json(mc.mean, R=R, L=params.L)),
        "mc_stderr": json.loads(density_matrix_json(mc.stderr, R=R, L=params.L)),
        "max_z": max_z,
        "max_abs_unresolved": max_abs,
    })
    log(f"oracle: max deviation {max_z:.6g} standard errors, unresolved components {max_abs:.3g}")
    return EXIT_OK


def cmd_classify(cfg: dict, em: Emitter, log) -> int:
    from .symmetry import ConstraintScenario, all_scenarios, classify_scenario

    keys = ("J_nonzero", "eta_nonzero", "gamma_nonzero")
    if any(k in cfg for k in keys):
        scenarios = [ConstraintScenario(cfg.get("J_nonzero", True), cfg.get("eta_nonzero", True), cfg.get("gamma_nonzero", True))]
    else:
        scenarios = list(all_scenarios())
    reports = [classify_scenario(s).report() for s in scenarios]
    em.json("classify", reports)
    for r in reports:
        log(f"{r['scenario']}: G={r['G']} H={r['H']} manifold={r['manifold']} class={r['class']}")
    return EXIT_OK


def cmd_rgflow(cfg: dict, em: Emitter, log) -> int:
    from .nlsm import beta_flow

    res = beta_flow(cfg["g0"], cfg["R"], cfg["lnL_max"], cfg["steps"])
    if cfg["format"] == "json":
        em.json("rgflow", {"lnL": res.lnL.tolist(), "g": res.g.tolist(), "direction": res.direction,
                           "pole": res.pole if math.isfinite(res.pole) else None, "truncated": res.truncated})
    else:
        em.csv("rgflow", ["lnL", "g"], zip(res.lnL, res.g))
    note = f", truncated before pole at lnL = {res.pole:.6g}" if res.truncated else ""
    log(f"rgflow: R={cfg['R']:g} g0={cfg['g0']:g} -> g={res.g[-1]:.6g} ({res.direction}){note}")
    return EXIT_OK


def cmd_coefficients(cfg: dict, em: Emitter, log) -> int:
    from .nlsm import coefficients

    c = coefficients(_params(cfg), cfg["rho"])
    em.json("coefficients", json.loads(c.to_json()))
    log(f"coefficients: v0^2={c.v0_squared:.12g} D={c.D:.12g} stiffness={c.stiffness:.12g} g_B={c.g_B:.12g}")
    return EXIT_OK


DISPATCH = {
    "trajectory": cmd_trajectory,
    "ensemble": cmd_ensemble,
    "lindblad": cmd_lindblad,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
    "classify": cmd_classify,
    "rgflow": cmd_rgflow,
    "coefficients": cmd_coefficients,
}


def dispatch(cfg: dict, stdout=None, stderr=None) -> int:
    """Run the configured command and write its outputs."""
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    em = Emitter(cfg)

    def log(msg: str):
        stderr.write(msg + "\n")

    try:
        code = DISPATCH[cfg["command"]](cfg, em, log)
    except NumericalError as exc:
        stderr.write(f"{type(exc).__name__}: {exc}\n")
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        stderr.write(f"{exc}\n")
        return EXIT_CONFIG
    try:
        em.write(cfg.get("out"), stdout)
    except OutputError as exc:
        stderr.write(f"output error: {exc}\n")
        return EXIT_IO
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"cannot read config: {exc}\n")
        return EXIT_IO
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
