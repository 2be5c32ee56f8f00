"""Run configuration: a single JSON document validated against a per-subcommand schema."""

import json
import math
from dataclasses import dataclass, field

from .biasreduce import MODES
from .diagnostics import ESTIMATORS, _SPHERE
from .exceptions import InvalidParameter, ParseError, ValidationError
from .functionals import functional_from_spec
from .lowerbound import FORMULAS
from .model import family_from_spec

SUBCOMMANDS = ("fit", "fisher", "estimate", "experiment", "lowerbound", "diagnose")
STOCHASTIC = frozenset({"fisher", "estimate", "experiment", "diagnose"})
FORMATS = ("csv", "jsonl")
COMMON = ("subcommand", "seed", "out", "format", "workers")
REQUIRED = object()

# per-subcommand fields and defaults; REQUIRED marks mandatory entries
SCHEMA = {
    "fit": {"family": REQUIRED, "data": REQUIRED, "tol": 1e-10, "max_iter": 100},
    "fisher": {"family": REQUIRED, "method": "both", "samples": 100_000},
    "estimate": {
        "family": REQUIRED, "functional": REQUIRED, "data": REQUIRED, "k": None, "R": 200,
        "mode": "equivariant", "tol": 1e-10, "max_iter": 100,
    },
    "experiment": {
        "family": REQUIRED, "functional": REQUIRED, "grid": REQUIRED, "k_values": [1],
        "estimators": ["plugin_mle", "fk_mle"], "outer_reps": 2000, "R": 200,
        "theta_truth": "random_sphere(1.0)", "mode": "equivariant", "tol": 1e-10, "max_iter": 100,
    },
    "lowerbound": {"formula_id": REQUIRED, "inputs": REQUIRED},
    "diagnose": {
        "family": REQUIRED, "theta": None, "n": REQUIRED, "reps": 1000, "levels": [0.5, 0.9, 0.99],
        "probes": 100, "tol": 1e-10, "max_iter": 100,
    },
}


@dataclass(frozen=True)
class RunConfig:
    """A validated run.

    ``family`` and ``functional`` are spec dicts; ``params`` holds the
    remaining subcommand fields with defaults filled in. ``out``, ``format``
    and ``workers`` only affect where and how fast output is produced.
    """

    subcommand: str
    seed: int = None
    family: dict = None
    functional: dict = None
    params: dict = field(default_factory=dict)
    out: str = None
    format: str = None
    workers: int = 1

    def to_dict(self, execution=True):
        """Plain document; ``execution=False`` drops ``out`` and ``workers``, which do not affect results."""
        doc = {"subcommand": self.subcommand}
        if self.seed is not None:
            doc["seed"] = self.seed
        if self.family is not None:
            doc["family"] = self.family
        if self.functional is not None:
            doc["functional"] = self.functional
        doc.update(self.params)
        doc["format"] = self.format
        if execution:
            if self.out is not None:
                doc["out"] = self.out
            doc["workers"] = self.workers
        return doc

    def serialize(self):
        return json.dumps(self.to_dict(), indent=2)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _positive_int(problems, name, v, minimum=1):
    if not _is_int(v) or v < minimum:
        problems.append(f"{name}: must be an integer >= {minimum}, got {v!r}")


def _check_family(problems, fam, needs_dim=True):
    if not isinstance(fam, dict):
        problems.append("family: must be an object")
        return
    if needs_dim:
        dim = fam.get("dim")
        if not _is_int(dim) or dim < 1:
            problems.append(f"family.dim: must be a positive integer, got {dim!r}")
            return
        probe = fam
    else:
        if "dim" in fam:
            problems.append("family.dim: not allowed for experiment; dimensions come from grid")
            return
        probe = {**fam, "dim": 1}
    try:
        family_from_spec(probe)
    except InvalidParameter as exc:
        problems.append(f"family: {exc}")


def _check_functional(problems, fn, dim):
    if not isinstance(fn, dict):
        problems.append("functional: must be an object")
        return
    try:
        functional_from_spec(fn, dim=dim)
    except InvalidParameter as exc:
        problems.append(f"functional: {exc}")


def _check_data(problems, data):
    if isinstance(data, str):
        return
    if isinstance(data, list) and data and all(isinstance(row, list) and all(_is_num(v) for v in row) for row in data):
        return
    problems.append("data: must be a CSV path or a nonempty list of numeric rows")


def _validate(doc):
    problems = []
    sub = doc["subcommand"]
    schema = SCHEMA[sub]
    unknown = sorted(set(doc) - set(schema) - set(COMMON))
    for name in unknown:
        problems.append(f"{name}: unknown field for {sub}")
    for name, default in schema.items():
        if default is REQUIRED and name not in doc:
            problems.append(f"{name}: required for {sub}")

    seed = doc.get("seed")
    if seed is None:
        if sub in STOCHASTIC:
            problems.append(f"seed: required for {sub}")
    elif not _is_int(seed) or not 0 <= seed < 2**64:
        problems.append(f"seed: must be an unsigned 64-bit integer, got {seed!r}")
    fmt = doc.get("format")
    if fmt is not None and fmt not in FORMATS:
        problems.append(f"format: must be one of {FORMATS}, got {fmt!r}")
    if "workers" in doc:
        _positive_int(problems, "workers", doc["workers"])
    if "out" in doc and not isinstance(doc["out"], str):
        problems.append("out: must be a path string")

    g = doc.get
    if "family" in doc:
        _check_family(problems, doc["family"], needs_dim=sub != "experiment")
    dim = g("family", {}).get("dim") if isinstance(g("family"), dict) else None
    if sub == "experiment":
        grid = g("grid")
        ok = isinstance(grid, list) and grid and isinstance(grid[0], list) and len(grid[0]) == 2
        dim = grid[0][1] if ok else None
    if "functional" in doc:
        _check_functional(problems, doc["functional"], dim if _is_int(dim) and dim > 0 else None)
    if "data" in doc:
        _check_data(problems, doc["data"])
    for name in ("tol",):
        if name in doc and not (_is_num(doc[name]) and doc[name] > 0):
            problems.append(f"{name}: must be a positive number")
    for name in ("max_iter", "R", "samples", "n", "probes"):
        if name in doc:
            _positive_int(problems, name, doc[name])
    if "outer_reps" in doc:
        _positive_int(problems, "outer_reps", doc["outer_reps"], 2)
    if "reps" in doc:
        _positive_int(problems, "reps", doc["reps"], 100)
    if g("k") is not None:
        _positive_int(problems, "k", doc["k"], 0)
    if "mode" in doc and doc["mode"] not in MODES:
        problems.append(f"mode: must be one of {MODES}")
    if "method" in doc and doc["method"] not in ("score", "hessian", "both"):
        problems.append("method: must be score, hessian or both")

    if sub == "experiment":
        grid = g("grid")
        if "grid" in doc and not (
            isinstance(grid, list) and grid and all(
                isinstance(c, list) and len(c) == 2 and all(_is_int(v) and v >= 1 for v in c) for c in grid)
        ):
            problems.append("grid: must be a nonempty list of [n, d] pairs of positive integers")
        ks = g("k_values")
        if "k_values" in doc and not (isinstance(ks, list) and ks and all(_is_int(k) and k >= 0 for k in ks)):
            problems.append("k_values: must be a nonempty list of non-negative integers")
        est = g("estimators")
        if "estimators" in doc and not (isinstance(est, list) and est and all(e in ESTIMATORS for e in est)):
            problems.append(f"estimators: must be a nonempty subset of {list(ESTIMATORS)}")
        truth = g("theta_truth")
        if "theta_truth" in doc and not (
            (isinstance(truth, str) and _SPHERE.match(truth))
            or (isinstance(truth, list) and truth and all(_is_num(v) for v in truth))
        ):
            problems.append("theta_truth: must be 'random_sphere(r)' or a list of numbers")
    if sub == "lowerbound":
        if "formula_id" in doc and doc["formula_id"] not in FORMULAS:
            problems.append(f"formula_id: must be one of {list(FORMULAS)}")
        if "inputs" in doc and not isinstance(doc["inputs"], dict):
            problems.append("inputs: must be an object")
    if sub == "diagnose":
        theta = g("theta")
        if theta is not None and not (
            isinstance(theta, list) and all(_is_num(v) for v in theta) and (not _is_int(dim) or len(theta) == dim)
        ):
            problems.append("theta: must be a list of numbers of length family.dim")
        lv = g("levels")
        if "levels" in doc and not (isinstance(lv, list) and lv and all(_is_num(p) and 0 < p < 1 for p in lv)):
            problems.append("levels: must be a nonempty list of numbers in (0, 1)")
    if problems:
        raise ValidationError(problems)


def _decode(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object", line=1)
    return doc


def parse_config(text, overrides=None):
    """Parse and validate a JSON config.

    Parameters
    ----------
    text : str
        A single JSON object.
    overrides : dict, optional
        Scalar fields (``subcommand``, ``seed``, ``out``, ``format``,
        ``workers``) that replace the document's values, as given by flags.

    Returns
    -------
    RunConfig

    Raises
    ------
    ParseError
        Malformed JSON or a missing/unknown subcommand.
    ValidationError
        Every schema violation found.
    """
    doc = _decode(text)
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    sub = doc.get("subcommand")
    if sub not in SUBCOMMANDS:
        raise ParseError(f"subcommand must be one of {SUBCOMMANDS}, got {sub!r}", field="subcommand")
    _validate(doc)

    params = {}
    for name, default in SCHEMA[sub].items():
        if name in ("family", "functional"):
            continue
        params[name] = doc.get(name, None if default is REQUIRED else default)
    if sub == "estimate" and params["k"] is None:
        params["k"] = _default_k(doc["functional"], doc["family"]["dim"])
    fmt = doc.get("format") or ("csv" if sub == "experiment" else "jsonl")
    return RunConfig(
        subcommand=sub,
        seed=doc.get("seed"),
        family=doc.get("family"),
        functional=doc.get("functional"),
        params=params,
        out=doc.get("out"),
        format=fmt,
        workers=doc.get("workers", 1),
    )


def _default_k(functional, dim):
    from .functionals import holder_order_k

    spec = functional_from_spec(functional, dim=dim)
    return holder_order_k(spec) if math.isfinite(spec.smoothness_s) else 1
