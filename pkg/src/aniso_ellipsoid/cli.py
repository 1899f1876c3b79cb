"""Command-line front end.

Usage::

    aniso-ellipsoid --config run.json --out results/ [--seed N] [--quad N] [--tol X]

Writes ``summary.json`` (and ``sweep.csv`` for sweeps) into the output
directory.  Exit codes: 0 success, 2 invalid configuration, 3 solver
non-convergence, 4 certificate failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import anisotropy as an
from . import energy, optimizer, verify
from .errors import DomainError, InvalidArgument, InvalidProfile, SolverError
from .spd_geometry import Ellipsoid, from_axes

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CERTIFICATE = 0, 2, 3, 4

COMMANDS = ("classify", "critical-mass", "solve", "sweep", "verify", "oracle")

_number = {"type": "number"}
_matrix = {"type": "array", "items": {"type": "array", "items": _number}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["command", "dimension", "profile"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "dimension": {"enum": [2, 3]},
        "profile": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["isotropic", "cosine", "zonal", "tabulated"]},
                "coefficients": {"type": "array", "items": _number},
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "axis": {"type": "array", "items": _number, "minItems": 3, "maxItems": 3},
                "path": {"type": "string"},
                "degree": {"type": "integer", "minimum": 0},
            },
        },
        "mass": {"type": "number", "exclusiveMinimum": 0},
        "masses": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                   "minItems": 1},
        "mass_multiples": {"type": "array",
                           "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "ellipsoid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "matrix": _matrix,
                "semi_axes": {"type": "array", "items": _number},
                "rotation": _matrix,
            },
        },
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "required": ["matrices"],
            "properties": {
                "matrices": {"type": "array", "items": _matrix, "minItems": 1, "maxItems": 2},
                "samples": {"type": "integer", "minimum": 2},
                "attraction": {"type": "number"},
            },
        },
        "quadrature": {"type": "integer", "minimum": 4},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "certificate_tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "exterior_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
}


class ConfigError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate_config(config)
    return config


def validate_config(config: dict):
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    cmd = config["command"]
    if cmd == "solve" and "mass" not in config:
        raise ConfigError("'solve' needs 'mass'")
    if cmd == "sweep" and ("masses" in config) == ("mass_multiples" in config):
        raise ConfigError("'sweep' needs exactly one of 'masses' or 'mass_multiples'")
    if cmd == "oracle" and "oracle" not in config:
        raise ConfigError("'oracle' needs an 'oracle' section")
    if cmd == "verify" and "ellipsoid" not in config and "mass" not in config:
        raise ConfigError("'verify' needs 'ellipsoid' or 'mass'")


def build_profile(config: dict, base_dir: Path) -> an.AnisotropyProfile:
    spec = config["profile"]
    d = config["dimension"]
    family = spec["family"]
    coeffs = spec.get("coefficients", [])
    if family == "isotropic":
        return an.isotropic_profile(d)
    if family == "cosine":
        if d != 2:
            raise InvalidArgument("cosine profiles are two-dimensional")
        return an.cosine_profile(coeffs)
    if family == "zonal":
        if d != 3:
            raise InvalidArgument("zonal profiles are three-dimensional")
        kwargs = {}
        if "scale" in spec:
            kwargs["scale"] = spec["scale"]
        if "axis" in spec:
            kwargs["axis"] = spec["axis"]
        return an.zonal_profile(coeffs, **kwargs)
    if "path" not in spec:
        raise InvalidArgument("tabulated profiles need 'path'")
    path = Path(spec["path"])
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise InvalidArgument(f"profile file {path} not found")
    points, values = an.read_samples(path, d)
    return an.tabulated_profile(d, points, values, spec.get("degree", 8))


def _options(config):
    return optimizer.SolverOptions(
        tol=config.get("tol", 1e-10),
        max_iter=config.get("max_iter", 5000),
        resolution=config.get("quadrature"),
    )


def _ellipsoid_summary(E: Ellipsoid) -> dict:
    return {"semi_axes": E.semi_axes.tolist(), "rotation": E.rotation.tolist(),
            "matrix": E.matrix.tolist(), "mass": E.mass}


def _outcome_summary(outcome) -> dict:
    out = {"outcome": outcome.kind}
    if isinstance(outcome, (optimizer.OptimalEllipsoid, optimizer.DegenerateAllMasses)):
        out["ellipsoid"] = _ellipsoid_summary(outcome.ellipsoid)
        out["lambda_tilde"] = outcome.result.lambda_tilde
        out["kkt_residual"] = outcome.result.kkt_residual
        out["constraint_gap"] = outcome.result.constraint_gap
        out["iterations"] = outcome.result.iterations
        out["certificates"] = outcome.certificates
    elif isinstance(outcome, optimizer.SubCritical):
        out["m_star"] = outcome.m_star
        out["critical_ellipsoid"] = _ellipsoid_summary(outcome.critical_ellipsoid)
        out["density"] = "(m/m*)*chi_E*"
        out["density_factor"] = outcome.m / outcome.m_star
    else:
        rep = outcome.report
        out["report"] = rep.to_dict() if hasattr(rep, "to_dict") else rep
    return out


def _regime_summary(p, regime) -> dict:
    out = regime.to_dict()
    out["critical_mass_upper_bound"] = an.critical_mass_upper_bound(p)
    out["ball_condition"] = an.ball_condition(p)
    return out


def _config_ellipsoid(config, d):
    spec = config["ellipsoid"]
    if "matrix" in spec:
        return Ellipsoid.from_matrix(spec["matrix"])
    if "semi_axes" in spec:
        return from_axes(spec.get("rotation", np.eye(d).tolist()), spec["semi_axes"])
    raise InvalidArgument("'ellipsoid' needs 'matrix' or 'semi_axes'")


def _sweep_csv(rows, d) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["m"] + [f"a{i + 1}" for i in range(d)]
                    + ["trace_ratio", "max_t2_gap", "lambda_tilde", "kkt_residual"])
    for r in rows:
        writer.writerow([repr(r.m)] + [repr(a) for a in r.semi_axes]
                        + [repr(r.trace_ratio), repr(r.max_t2_gap),
                           repr(r.lambda_tilde), repr(r.kkt_residual)])
    return buf.getvalue()


def execute(config: dict, base_dir: Path = Path(".")):
    """Run a validated config; returns ``(exit_code, summary, files)``."""
    d = config["dimension"]
    seed = int(config.get("seed", 0))
    cert_tol = config.get("certificate_tol", 1e-8)
    n_ext = config.get("exterior_samples", 10_000)
    p = build_profile(config, base_dir)
    opts = _options(config)
    cmd = config["command"]
    result: dict = {"profile": p.to_dict()}
    files = {}
    code = EXIT_OK

    if cmd in ("classify", "critical-mass", "solve", "sweep"):
        regime = optimizer.classify(p, opts)
        result["classification"] = _regime_summary(p, regime)
        if cmd == "critical-mass":
            result["m_star"] = regime.m_star
        elif cmd == "solve":
            outcome = optimizer.solve(p, config["mass"], opts, regime=regime,
                                      exterior_samples=n_ext, seed=seed, tol=cert_tol)
            result.update(_outcome_summary(outcome))
            certs = result.get("certificates")
            if certs and not certs["passed"]:
                code = EXIT_CERTIFICATE
        elif cmd == "sweep":
            if "masses" in config:
                masses = config["masses"]
            else:
                if regime.m_star is None:
                    raise InvalidArgument("'mass_multiples' needs a critical mass")
                masses = [k * regime.m_star for k in config["mass_multiples"]]
            masses = sorted(masses)
            rows = verify.sweep_rows(p, masses, opts, regime)
            mono = verify.check_monotonicity(rows)
            rnd = verify.check_roundness(rows)
            files["sweep.csv"] = _sweep_csv(mono.rows, d)
            result["sweep"] = {
                "masses": masses,
                "trace_ratio_nonincreasing": mono.nonincreasing,
                "roundness_C": rnd.C,
                "roundness_slope": rnd.slope,
                "roundness_bound_holds": rnd.bound_holds,
                "axis_ratio_monotone": rnd.ratios_monotone,
                "max_t_product_error": rnd.max_product_error,
            }
    elif cmd == "verify":
        if "ellipsoid" in config:
            E = _config_ellipsoid(config, d)
            m = config.get("mass", E.mass)
        else:
            m = config["mass"]
            res = optimizer.minimize_constrained(p, m, opts)
            if not res.converged:
                raise SolverError(f"constrained solve did not converge: {res.message}", res)
            E = optimizer.snap_to_mass(res.M, m, d)
        cert = verify.certify(p, E, m, cert_tol, n_samples=n_ext, seed=seed)
        kres, lam_t = optimizer.kkt_residual(p, E.matrix, m)
        result["ellipsoid"] = _ellipsoid_summary(E)
        result["certificate"] = cert.to_dict()
        result["kkt_residual"] = kres
        result["lambda_tilde"] = lam_t
        if not cert.passed:
            code = EXIT_CERTIFICATE
    elif cmd == "oracle":
        spec = config["oracle"]
        samples = spec.get("samples", 1_000_000)
        attraction = spec.get("attraction", 1.0)
        kernel = an.kernel_2d(p) if d == 2 else _kernel_3d(p)
        entries = []
        for i, M in enumerate(spec["matrices"]):
            E = Ellipsoid.from_matrix(M)
            mc = energy.mc_energy_oracle(kernel, E, samples, seed + i, attraction)
            en = energy.ellipsoid_energy(p, E)
            entries.append({"matrix": E.matrix.tolist(), "mc_mean": mc.mean,
                            "mc_standard_error": mc.standard_error, "samples": mc.samples,
                            "seed": mc.seed, "quadrature_energy": en.value,
                            "absolute": en.absolute})
        result["oracle"] = entries
        if len(entries) == 2:
            diff_q = entries[0]["quadrature_energy"] - entries[1]["quadrature_energy"]
            diff_mc = entries[0]["mc_mean"] - entries[1]["mc_mean"]
            se = math.hypot(entries[0]["mc_standard_error"], entries[1]["mc_standard_error"])
            result["difference"] = {"quadrature": diff_q, "monte_carlo": diff_mc,
                                    "standard_error": se,
                                    "z_score": (diff_mc - diff_q) / se if se > 0 else None}
    summary = {"tool": "aniso_ellipsoid", "version": tool_version(), "seed": seed,
               "config": config, "result": result, "exit_code": code}
    return code, summary, files


def _kernel_3d(p):
    if p.family != "isotropic":
        raise InvalidArgument("the Monte Carlo oracle in 3D needs a closed-form kernel "
                              "(isotropic profile only)")
    return energy.coulomb_kernel(3)


def _to_json(obj) -> str:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(f"not serializable: {type(o).__name__}")

    def clean(o):
        if isinstance(o, float) and not math.isfinite(o):
            return None
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return o

    return json.dumps(clean(json.loads(json.dumps(obj, default=default))),
                      indent=2, sort_keys=True) + "\n"


def _write_outputs(out_dir: Path, summary: dict, files: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(_to_json(summary), encoding="utf-8")
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aniso-ellipsoid",
        description="Optimal ellipsoids for anisotropic attractive-repulsive energies.")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, help="random seed (overrides config)")
    parser.add_argument("--quad", type=int, help="quadrature resolution (overrides config)")
    parser.add_argument("--tol", type=float, help="solver tolerance (overrides config)")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.quad is not None:
            config["quadrature"] = args.quad
        if args.tol is not None:
            config["tol"] = args.tol
        validate_config(config)
        code, summary, files = execute(config, Path(args.config).resolve().parent)
    except (ConfigError, InvalidArgument, InvalidProfile, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        summary = {"tool": "aniso_ellipsoid", "version": tool_version(),
                   "seed": config.get("seed", 0), "config": config,
                   "error": str(exc), "exit_code": EXIT_SOLVER}
        if exc.result is not None and hasattr(exc.result, "to_dict"):
            summary["diagnostics"] = exc.result.to_dict()
        _write_outputs(out_dir, summary, {})
        return EXIT_SOLVER
    _write_outputs(out_dir, summary, files)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
