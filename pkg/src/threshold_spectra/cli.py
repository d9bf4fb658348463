"""Batch front end: ``analyze <config.json> [--command X] [--out PATH] [--format json|csv] [--jobs N]``.

A job config is a JSON object::

    {
      "schema": 1,
      "model": {"dispersion": "standard", "form_factor": {"tag": "case_ii"}},
      "p": [0.0, 0.0],
      "command": "threshold"
    }

Exit codes: 0 ok, 1 error, 2 config error, 3 flagged result, 4 I/O failure.
The environment variable ``THRESHOLD_SPECTRA_QUAD_TOL`` overrides the
quadrature tolerance; the value used and its source are echoed in the report.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, asymptotics, spectral, threshold
from .catalog import TorusPoint, make_model
from .errors import ConfigurationError, ThresholdSpectraError
from .quadrature import EPS_FLOOR

SCHEMA_VERSION = 1
COMMANDS = ("band", "omega", "threshold", "classify", "eigenvalue", "sweep", "verify", "oracle")
FORMATS = ("json", "csv")
TOL_ENV = "THRESHOLD_SPECTRA_QUAD_TOL"

DEFAULT_QUAD_REL_TOL = 1e-8
DEFAULT_EPS_FLOOR = EPS_FLOOR
QUAD_TOL_RANGE = (1e-14, 1e-4)
EPS_FLOOR_RANGE = (EPS_FLOOR, 1e-6)
ABSENCE_PROBE = 1e-8
VERIFY_BOUNDS = {"I": 0.02, "II": 0.05, "III": 0.01}

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_FLAGGED, EXIT_IO = 0, 1, 2, 3, 4
_EXIT_FOR_STATUS = {"ok": EXIT_OK, "error": EXIT_ERROR, "flagged": EXIT_FLAGGED}

_TOP_KEYS = {
    "schema", "model", "p", "command", "mu", "mu_list", "grid", "z", "eps",
    "n_per_axis", "quad_rel_tol", "eps_floor", "jobs", "output",
}
_MODEL_KEYS = {"dispersion", "form_factor", "label"}
_GRID_KEYS = {"start", "stop", "num", "relative"}
_OUTPUT_KEYS = {"path", "format"}


@dataclass
class JobConfig:
    model: object
    p: TorusPoint
    command: str
    params: dict = field(default_factory=dict)
    quad_rel_tol: float = DEFAULT_QUAD_REL_TOL
    quad_rel_tol_source: str = "default"
    eps_floor: float = DEFAULT_EPS_FLOOR
    jobs: int = 1
    output_path: Optional[str] = None
    output_format: str = "json"
    overrides: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Config as it was resolved; ``jobs`` is omitted because results do not depend on it."""
        return {
            "schema": SCHEMA_VERSION,
            "model": self.model.to_dict(),
            "p": [self.p.q1, self.p.q2],
            "command": self.command,
            "params": {k: v for k, v in sorted(self.params.items())},
            "quad_rel_tol": self.quad_rel_tol,
            "quad_rel_tol_source": self.quad_rel_tol_source,
            "eps_floor": self.eps_floor,
            "output": {"path": self.output_path, "format": self.output_format},
            "overrides": list(self.overrides),
        }


@dataclass
class Report:
    status: str
    body: dict
    table: Optional[asymptotics.SweepTable] = None

    @property
    def exit_code(self) -> int:
        return _EXIT_FOR_STATUS[self.status]


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

def _number(value, key, *, positive=False, integer=False):
    kinds = (int,) if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ConfigurationError(f"{key!r} must be {'an integer' if integer else 'a real number'}, got {value!r}")
    value = int(value) if integer else float(value)
    if not math.isfinite(value):
        raise ConfigurationError(f"{key!r} must be finite, got {value!r}")
    if positive and value <= 0:
        raise ConfigurationError(f"{key!r} must be > 0, got {value!r}")
    return value


def _in_range(value, key, lo, hi):
    if not lo <= value <= hi:
        raise ConfigurationError(f"{key!r}={value!r} outside the supported range [{lo:g}, {hi:g}]")
    return value


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{where} must be an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown} in {where}; allowed: {sorted(allowed)}")


def _tagged(entry, key):
    if isinstance(entry, str):
        return entry, {}
    if isinstance(entry, dict) and isinstance(entry.get("tag"), str):
        params = {k: v for k, v in entry.items() if k != "tag"}
        return entry["tag"], params
    raise ConfigurationError(f"model.{key} must be a tag string or an object with a string 'tag'")


def _parse_model(obj):
    _reject_unknown(obj, _MODEL_KEYS, "model")
    disp, dparams = _tagged(obj.get("dispersion", "standard"), "dispersion")
    ff, fparams = _tagged(obj.get("form_factor", "case_i"), "form_factor")
    label = obj.get("label", "")
    if not isinstance(label, str):
        raise ConfigurationError("model.label must be a string")
    return make_model(disp, ff, dparams, fparams, label)


def _parse_params(cfg, command):
    params = {}
    if "mu" in cfg:
        params["mu"] = _number(cfg["mu"], "mu", positive=True)
    if "mu_list" in cfg:
        lst = cfg["mu_list"]
        if not isinstance(lst, list) or not lst:
            raise ConfigurationError("'mu_list' must be a non-empty list of positive reals")
        params["mu_list"] = [_number(v, "mu_list[]", positive=True) for v in lst]
    if "grid" in cfg:
        g = cfg["grid"]
        _reject_unknown(g, _GRID_KEYS, "grid")
        missing = sorted({"start", "stop", "num"} - set(g))
        if missing:
            raise ConfigurationError(f"grid is missing key(s) {missing}")
        relative = g.get("relative", False)
        if not isinstance(relative, bool):
            raise ConfigurationError("'grid.relative' must be a boolean")
        params["grid"] = {
            "start": _number(g["start"], "grid.start", positive=True),
            "stop": _number(g["stop"], "grid.stop", positive=True),
            "num": _number(g["num"], "grid.num", positive=True, integer=True),
            "relative": relative,
        }
    if "mu_list" in params and "grid" in params:
        raise ConfigurationError("give either 'mu_list' or 'grid', not both")
    if "z" in cfg:
        params["z"] = _number(cfg["z"], "z")
    if "eps" in cfg:
        params["eps"] = _number(cfg["eps"], "eps")
        if params["eps"] < 0:
            raise ConfigurationError("'eps' must be >= 0")
    if "z" in params and "eps" in params:
        raise ConfigurationError("give either 'z' or 'eps', not both")
    if "n_per_axis" in cfg:
        n = _number(cfg["n_per_axis"], "n_per_axis", positive=True, integer=True)
        if n < 16 or n % 2 or n > 4096:
            raise ConfigurationError("'n_per_axis' must be an even integer in [16, 4096]")
        params["n_per_axis"] = n

    if command in ("eigenvalue", "oracle") and "mu" not in params:
        raise ConfigurationError(f"command {command!r} requires 'mu' (real > 0)")
    if command == "omega" and "z" not in params and "eps" not in params:
        raise ConfigurationError("command 'omega' requires 'z' or 'eps' (real)")
    return params


def load_config(source, command=None, out=None, fmt=None, jobs=None, environ=None) -> JobConfig:
    """Parse and validate a job config.

    ``source`` is a path, inline JSON text, or an already-decoded dict.
    Keyword arguments are command-line overrides; each one that changes the
    config is recorded in ``overrides``.

    Raises
    ------
    ConfigurationError
        On any schema violation, naming the offending key.
    OSError
        If ``source`` is a path that cannot be read.
    """
    environ = os.environ if environ is None else environ
    if isinstance(source, dict):
        cfg = dict(source)
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text(encoding="utf-8")
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    _reject_unknown(cfg, _TOP_KEYS, "config")
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigurationError(f"'schema' must be {SCHEMA_VERSION}, got {cfg.get('schema')!r}")

    overrides = []

    def override(key, value, current):
        if value is not None and value != current:
            overrides.append({"key": key, "config": current, "flag": value})
            return value
        return current

    output = cfg.get("output", {})
    _reject_unknown(output, _OUTPUT_KEYS, "output")
    cmd = override("command", command, cfg.get("command"))
    if cmd not in COMMANDS:
        raise ConfigurationError(f"'command' must be one of {list(COMMANDS)}, got {cmd!r}")
    path = override("output.path", out, output.get("path"))
    if path is not None and not isinstance(path, str):
        raise ConfigurationError("'output.path' must be a string")
    fmt = override("output.format", fmt, output.get("format", "json"))
    if fmt not in FORMATS:
        raise ConfigurationError(f"'output.format' must be one of {list(FORMATS)}, got {fmt!r}")
    if fmt == "csv" and path is None:
        raise ConfigurationError("csv output needs an output path")
    if fmt == "csv" and Path(path).suffix == ".json":
        raise ConfigurationError("csv output path must not end in .json (the JSON report is written beside it)")
    n_jobs = cfg.get("jobs", 1)
    if jobs is not None:
        n_jobs = jobs
    n_jobs = _number(n_jobs, "jobs", positive=True, integer=True)

    if "model" not in cfg:
        raise ConfigurationError("missing key 'model' (object)")
    model = _parse_model(cfg["model"])
    p = cfg.get("p")
    if not isinstance(p, list) or len(p) != 2:
        raise ConfigurationError(f"'p' must be a list of two reals, got {p!r}")
    p = TorusPoint(_number(p[0], "p[0]"), _number(p[1], "p[1]"))

    tol, source_tag = DEFAULT_QUAD_REL_TOL, "default"
    if "quad_rel_tol" in cfg:
        tol, source_tag = _number(cfg["quad_rel_tol"], "quad_rel_tol", positive=True), "config"
    if environ.get(TOL_ENV):
        try:
            tol = float(environ[TOL_ENV])
        except ValueError:
            raise ConfigurationError(f"{TOL_ENV}={environ[TOL_ENV]!r} is not a real number") from None
        source_tag = "env"
    _in_range(tol, "quad_rel_tol", *QUAD_TOL_RANGE)
    floor = _in_range(
        _number(cfg.get("eps_floor", DEFAULT_EPS_FLOOR), "eps_floor", positive=True), "eps_floor", *EPS_FLOOR_RANGE
    )

    return JobConfig(
        model=model,
        p=p,
        command=cmd,
        params=_parse_params(cfg, cmd),
        quad_rel_tol=tol,
        quad_rel_tol_source=source_tag,
        eps_floor=floor,
        jobs=n_jobs,
        output_path=path,
        output_format=fmt,
        overrides=overrides,
        raw=cfg,
    )


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _sweep_mu_values(cfg: JobConfig, case_tag: str, mu_c: float):
    params = cfg.params
    if "mu_list" in params:
        return params["mu_list"]
    if "grid" in params:
        g = params["grid"]
        values = np.geomspace(g["start"], g["stop"], g["num"])
        return (mu_c + values if g["relative"] else values).tolist()
    return asymptotics.default_mu_values(case_tag, mu_c).tolist()


def _apply_floor(table: asymptotics.SweepTable, floor: float):
    kept = [r for r in table.rows if r.gap >= floor]
    for r in table.rows:
        if r.gap < floor:
            table.errors.append((r.mu, f"gap {r.gap:.3e} below eps_floor {floor:.0e}"))
    table.rows = kept
    return table


def _cmd_band(cfg):
    band = spectral.band_edges(cfg.model, cfg.p)
    return "ok" if band.admissible else "flagged", band.to_dict(), None


def _cmd_omega(cfg):
    band = spectral.require_admissible(cfg.model, cfg.p)
    z = cfg.params["z"] if "z" in cfg.params else band.m - cfg.params["eps"]
    gap = band.m - z
    if 0 < gap < cfg.eps_floor:
        raise ThresholdSpectraError(f"m(p) - z = {gap:.3e} is below eps_floor {cfg.eps_floor:.0e}")
    est = spectral.omega(cfg.model, cfg.p, z, cfg.quad_rel_tol)
    return "ok", {"z": z, "m_minus_z": gap, "omega": est.to_dict()}, None


def _cmd_classify(cfg):
    return "ok", threshold.classify(cfg.model, cfg.p).to_dict(), None


def _cmd_threshold(cfg):
    report = threshold.leading_coefficients(cfg.model, cfg.p, rel_tol=cfg.quad_rel_tol)
    return ("flagged" if report.flagged else "ok"), report.to_dict(), None


def _cmd_eigenvalue(cfg):
    mu = cfg.params["mu"]
    mu_c = spectral.coupling_threshold(cfg.model, cfg.p, cfg.quad_rel_tol)
    res = spectral.eigenvalue(cfg.model, mu, cfg.p, cfg.quad_rel_tol)
    if res is None:
        d = spectral.delta_at_gap(cfg.model, mu, cfg.p, ABSENCE_PROBE, cfg.quad_rel_tol)
        payload = {
            "present": False,
            "mu": mu,
            "mu_threshold": mu_c,
            "evidence": {"m_minus_z": ABSENCE_PROBE, "delta": d},
        }
        return ("ok" if d > 0 else "flagged"), payload, None
    if res.gap < cfg.eps_floor:
        raise ThresholdSpectraError(f"gap {res.gap:.3e} below eps_floor {cfg.eps_floor:.0e}")
    return "ok", {"present": True, "mu": mu, "mu_threshold": mu_c, **res.to_dict()}, None


def _cmd_sweep(cfg):
    case = threshold.classify(cfg.model, cfg.p)
    mu_c = spectral.coupling_threshold(cfg.model, cfg.p, cfg.quad_rel_tol)
    mus = _sweep_mu_values(cfg, case.tag, mu_c)
    table = asymptotics.sweep_eigenvalues(cfg.model, cfg.p, mus, cfg.quad_rel_tol, jobs=cfg.jobs)
    _apply_floor(table, cfg.eps_floor)
    status = "flagged" if table.errors else "ok"
    return status, {"case": case.tag, "sweep": table.to_dict()}, table


def _cmd_verify(cfg):
    case = threshold.classify(cfg.model, cfg.p)
    report = threshold.leading_coefficients(cfg.model, cfg.p, case, rel_tol=cfg.quad_rel_tol)
    mus = _sweep_mu_values(cfg, case.tag, report.mu_threshold)
    table = asymptotics.sweep_eigenvalues(cfg.model, cfg.p, mus, cfg.quad_rel_tol, jobs=cfg.jobs)
    _apply_floor(table, cfg.eps_floor)
    fit = asymptotics.fit_case(table, report)
    bound = VERIFY_BOUNDS[case.tag]
    passed = fit.rel_dev <= bound and fit.correction_order_ok and not report.flagged and not table.errors
    payload = {
        "case": case.tag,
        "threshold": report.to_dict(),
        "sweep": table.to_dict(),
        "fit": fit.to_dict(),
        "acceptance_bound": bound,
        "passed": bool(passed),
    }
    return ("ok" if passed else "flagged"), payload, table


def _cmd_oracle(cfg):
    mu = cfg.params["mu"]
    n = cfg.params.get("n_per_axis", 1024)
    band = spectral.require_admissible(cfg.model, cfg.p)
    res = spectral.eigenvalue(cfg.model, mu, cfg.p, cfg.quad_rel_tol)
    e_grid, err = spectral.grid_oracle_extrapolated(cfg.model, mu, cfg.p, n)
    payload = {"mu": mu, "n_per_axis": n, "solver": None if res is None else res.to_dict(),
               "oracle_energy": e_grid, "oracle_error_estimate": err}
    if res is None or e_grid is None:
        payload["agree"] = res is None and e_grid is None
        return ("ok" if payload["agree"] else "flagged"), payload, None
    rel = abs((band.m - e_grid) - res.gap) / res.gap
    payload["rel_gap_difference"] = rel
    payload["agree"] = bool(rel <= 1e-5)
    return ("ok" if payload["agree"] else "flagged"), payload, None


_DISPATCH = {
    "band": _cmd_band,
    "omega": _cmd_omega,
    "classify": _cmd_classify,
    "threshold": _cmd_threshold,
    "eigenvalue": _cmd_eigenvalue,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
    "oracle": _cmd_oracle,
}


def run(cfg: JobConfig) -> Report:
    """Execute the configured command; library errors become ``status = "error"``."""
    diagnostics = []
    table = None
    try:
        status, results, table = _DISPATCH[cfg.command](cfg)
    except ThresholdSpectraError as exc:
        status, results = "error", None
        diagnostics.append({"error": type(exc).__name__, "message": str(exc)})
    if table is not None:
        diagnostics.extend({"mu": mu, "message": msg} for mu, msg in table.errors)
    body = {
        "schema": SCHEMA_VERSION,
        "status": status,
        "command": cfg.command,
        "config": cfg.echo(),
        "provenance": {
            "version": __version__,
            "quad_rel_tol": cfg.quad_rel_tol,
            "quad_rel_tol_source": cfg.quad_rel_tol_source,
            "eps_floor": cfg.eps_floor,
        },
        "results": results,
        "diagnostics": diagnostics,
    }
    return Report(status, body, table)


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        s = asymptotics.repr_float(x)
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(body: dict) -> str:
    """Deterministic JSON with every float at 17 significant digits."""
    return _encode(body) + "\n"


def write_report(report: Report, fmt: str = "json", path: Optional[str] = None, stream=None):
    """Write the JSON report and, for ``csv`` with a sweep payload, the table.

    With ``fmt == "csv"`` the CSV goes to ``path`` and the JSON report to
    ``path`` with a ``.json`` suffix.  Without a path the JSON is written to
    ``stream`` (stdout by default).
    """
    text = dumps(report.body)
    if path is None:
        (stream or sys.stdout).write(text)
        return
    target = Path(path)
    if fmt == "csv":
        if report.table is not None:
            target.write_text(report.table.to_csv(), encoding="utf-8")
        target = target.with_suffix(".json")
    target.write_text(text, encoding="utf-8")


def _parser():
    ap = argparse.ArgumentParser(prog="analyze", description="Threshold spectra batch analysis.")
    ap.add_argument("config", help="path to a JSON job config")
    ap.add_argument("--command", help="override the config command", choices=COMMANDS)
    ap.add_argument("--out", help="output path (JSON report; CSV table with --format csv)")
    ap.add_argument("--format", dest="fmt", choices=FORMATS, help="output format")
    ap.add_argument("--jobs", type=int, help="worker cap for sweeps (results do not depend on it)")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, command=args.command, out=args.out, fmt=args.fmt, jobs=args.jobs)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    report = run(cfg)
    try:
        write_report(report, cfg.output_format, cfg.output_path)
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
