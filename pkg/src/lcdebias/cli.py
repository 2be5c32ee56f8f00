"""Command line entry point.

``lcdebias SUBCOMMAND --config run.json [--seed N] [--out PATH] [--workers N] [--format csv|jsonl]``

Exit status is 0 on success, 1 for usage and configuration errors, 2 for
numerical failures and 3 for I/O errors; failures also print a JSON error
record on stderr.
"""

import argparse
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _random
from .biasreduce import estimate_fk
from .config import FORMATS, SUBCOMMANDS, parse_config
from .diagnostics import ExperimentConfig, concentration_diagnostic, run_risk_experiment
from .exceptions import (
    DimensionMismatch,
    InvalidParameter,
    LcDebiasError,
    NumericalError,
    ParseError,
    TableNotBuilt,
    UnsupportedSampler,
    ValidationError,
)
from .functionals import functional_from_spec
from .lowerbound import evaluate_bound
from .mle import fit_mle
from .model import check_potential, family_from_spec, fisher_information
from .sampler import make_sampler

EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


class UsageError(InvalidParameter):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="lcdebias", description="Bias-reduced estimation of smooth functionals in log-concave location families.")
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS, help="taken from the config when omitted")
    p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration, '-' for stdin")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--out", metavar="PATH", help="output file; stdout when omitted")
    p.add_argument("--workers", type=int, metavar="N")
    p.add_argument("--format", choices=FORMATS)
    return p


def _plain(x):
    """JSON-safe copy: numpy scalars and arrays become Python objects, non-finite floats become null."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _json_line(record):
    return json.dumps(_plain(record), allow_nan=False) + "\n"


def _flatten(record, prefix=""):
    out = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        elif isinstance(value, (list, tuple, np.ndarray)):
            flat = np.asarray(value, dtype=object).ravel()
            for i, v in enumerate(flat):
                out[f"{name}_{i}"] = v
        else:
            out[name] = value
    return out


def _csv_record(record):
    import csv

    flat = _flatten(_plain(record))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(flat.keys())
    writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in flat.values()])
    return buf.getvalue()


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_data(data, dim):
    """Observations from a headerless CSV path or inline rows, shape ``(n, dim)``."""
    if isinstance(data, str):
        arr = np.loadtxt(data, delimiter=",", ndmin=2, dtype=float)
    else:
        arr = np.asarray(data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise InvalidParameter("data must contain at least one observation")
    if arr.shape[1] != dim:
        raise DimensionMismatch(f"data has {arr.shape[1]} columns but family.dim is {dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter("data contains non-finite values")
    return arr


def _run_fit(cfg):
    p = cfg.params
    pot = family_from_spec(cfg.family)
    res = fit_mle(pot, load_data(p["data"], pot.dim), tol=p["tol"], max_iter=p["max_iter"])
    return {"result": res.to_dict()}


def _run_fisher(cfg):
    p = cfg.params
    pot = family_from_spec(cfg.family)
    ss = _random.as_seed_sequence(cfg.seed)
    methods = ("score", "hessian") if p["method"] == "both" else (p["method"],)
    keys = {"score": 0, "hessian": 1}
    out = {m: fisher_information(pot, m, samples=p["samples"], rng=_random.substream(ss, keys[m])).to_dict()
           for m in methods}
    try:
        oracle = pot.fisher_oracle()
    except NotImplementedError:
        oracle = None
    return {"estimates": out, "oracle": oracle}


def _run_estimate(cfg):
    p = cfg.params
    pot = family_from_spec(cfg.family)
    fn = functional_from_spec(cfg.functional, dim=pot.dim)
    data = load_data(p["data"], pot.dim)
    est = estimate_fk(pot, make_sampler(pot), data, fn, p["k"], R=p["R"], mode=p["mode"],
                      rng=_random.as_seed_sequence(cfg.seed), tol=p["tol"], max_iter=p["max_iter"])
    return {"estimate": {**est.to_dict(), "plugin": float(fn.value(est.start))}}


def _run_diagnose(cfg):
    p = cfg.params
    pot = family_from_spec(cfg.family)
    ss = _random.as_seed_sequence(cfg.seed)
    theta = np.zeros(pot.dim) if p["theta"] is None else np.asarray(p["theta"], dtype=float)
    conc = concentration_diagnostic(pot, make_sampler(pot), theta, p["n"], p["reps"],
                                    rng=_random.substream(ss, _random.DATA), levels=tuple(p["levels"]),
                                    tol=p["tol"], max_iter=p["max_iter"])
    check = check_potential(pot, probes=p["probes"], rng=_random.generator(ss, _random.AUX))
    return {
        "concentration": conc.to_dict(),
        "derivative_check": {**check.__dict__, "passed": check.passed},
        "constants": {"M": pot.M, "L": pot.L, "m": pot.m, "poincare_upper": pot.poincare_upper},
    }


def _run_lowerbound(cfg):
    return evaluate_bound(cfg.params["formula_id"], cfg.params["inputs"]).to_dict()


def _experiment_config(cfg):
    p = cfg.params
    return ExperimentConfig(
        family=cfg.family, grid=p["grid"], functional=cfg.functional, k_values=p["k_values"],
        estimators=p["estimators"], outer_reps=p["outer_reps"], R=p["R"], theta_truth=p["theta_truth"],
        seed=cfg.seed, mode=p["mode"], tol=p["tol"], max_iter=p["max_iter"],
    )


def _run_experiment(cfg):
    exp = _experiment_config(cfg)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return run_risk_experiment(exp, executor=pool)
    return run_risk_experiment(exp)


RUNNERS = {
    "fit": _run_fit,
    "fisher": _run_fisher,
    "estimate": _run_estimate,
    "diagnose": _run_diagnose,
    "lowerbound": _run_lowerbound,
}


def render(cfg):
    """Run ``cfg`` and return ``(main_text, sidecar_text)``.

    The resolved config is echoed without ``out`` and ``workers`` so output
    bytes depend only on what determines the results. CSV output carries the
    config in the sidecar; JSON lines embed it.
    """
    echo = cfg.to_dict(execution=False)
    if cfg.subcommand == "experiment":
        report = _run_experiment(cfg)
        if cfg.format == "csv":
            return report.to_csv(), _json_line(echo)
        lines = [_json_line({"config": echo})]
        lines += [_json_line(row.as_record()) for row in report.rows]
        return "".join(lines), None
    record = RUNNERS[cfg.subcommand](cfg)
    if cfg.format == "csv":
        return _csv_record(record), _json_line(echo)
    return _json_line({"config": echo, **record}), None


def run(cfg, stdout=None):
    """Execute a parsed config and write its outputs; returns the exit status."""
    text, sidecar = render(cfg)
    if cfg.out is None:
        (stdout or sys.stdout).write(text)
        return 0
    write_atomic(cfg.out, text)
    if sidecar is not None:
        write_atomic(cfg.out + ".config.json", sidecar)
    return 0


def _error_record(exc, code):
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ParseError):
        rec.update(line=exc.line, field=exc.field)
    if isinstance(exc, ValidationError):
        rec["problems"] = exc.problems
    return rec


def _exit_code(exc):
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (NumericalError, TableNotBuilt, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (InvalidParameter, UnsupportedSampler, LcDebiasError)):
        return EXIT_USAGE
    raise exc


def main(argv=None, stdout=None, stderr=None):
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.config == "-":
            text = sys.stdin.read()
        else:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        overrides = {"subcommand": args.subcommand, "seed": args.seed, "out": args.out, "workers": args.workers,
                     "format": args.format}
        if args.subcommand is not None:
            try:
                doc = json.loads(text)
            except json.JSONDecodeError:
                doc = None
            doc_sub = doc.get("subcommand") if isinstance(doc, dict) else None
            if doc_sub is not None and doc_sub != args.subcommand:
                raise UsageError(f"subcommand {args.subcommand!r} conflicts with config subcommand {doc_sub!r}")
        cfg = parse_config(text, overrides)
        return run(cfg, stdout=stdout)
    except Exception as exc:  # mapped to a stable exit status below
        code = _exit_code(exc)
        stderr.write(_json_line(_error_record(exc, code)))
        return code


if __name__ == "__main__":
    sys.exit(main())
