"""Run configuration: strict JSON parsing, validation, canonical form and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from ._validation import ConfigurationError, InputError
from .diagnostics import NeighborhoodPair, region_from_dict, regions_disjoint
from .engine import DEFAULT_BOUND
from .problems import builtin_problem
from .schedule import NoiseModel, Schedule

CONFIG_VERSION = 1

SCHEDULE_DEFAULTS = {
    "power": {"c": 1.0, "alpha": 0.7},
    "constant": {"c": 0.1},
}
NOISE_DEFAULTS = {
    "zero": {"q": 2.0},
    "gaussian": {"sigma": 1.0, "q": 2.0},
    "bounded_uniform": {"a": 1.0, "q": 2.0},
}
BLOCK_DEFAULTS = {
    "intervals": {},
    "windowed": {"T": 1.0},
    "travel_times": {},
    "lyapunov": {"tail_fraction": 0.1},
    "accumulation": {"tail_fraction": 0.1, "eps": 0.05},
}


def load_schema():
    text = (resources.files("spgd") / "schema" / "run_config.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        schema = load_schema()
        cls = jsonschema.validators.validator_for(schema)
        cls.check_schema(schema)
        _VALIDATOR = cls(schema)
    return _VALIDATOR


def _pointer(path):
    parts = [str(p).replace("~", "~0").replace("/", "~1") for p in path]
    return "/" + "/".join(parts) if parts else "/"


def _deepest(error):
    # descend into allOf/if-then branches so the pointer names the offending key
    while error.context:
        error = max(error.context, key=lambda e: len(e.absolute_path))
    return error


@dataclass
class RunConfig:
    """A validated run description. Build it with :func:`parse_config`."""

    problem: dict
    schedule: dict
    noise: dict
    x0: list
    n_iters: int
    seed: int = 0
    bound: float = DEFAULT_BOUND
    diagnostics: list = field(default_factory=list)
    output_dir: str = "runs"
    thinning: int | None = None
    version: int = CONFIG_VERSION

    def canonical(self):
        """Plain dict with every default filled in; equal configs give equal dicts."""
        return {
            "version": self.version,
            "problem": {"name": self.problem["name"], "params": dict(self.problem.get("params", {}))},
            "schedule": dict(self.schedule),
            "noise": dict(self.noise),
            "x0": [float(v) for v in self.x0],
            "n_iters": int(self.n_iters),
            "seed": int(self.seed),
            "bound": float(self.bound),
            "diagnostics": [dict(b) for b in self.diagnostics],
            "output_dir": self.output_dir,
            "thinning": self.thinning,
        }

    def to_json(self, indent=2):
        return json.dumps(self.canonical(), indent=indent, sort_keys=True) + "\n"

    @property
    def config_hash(self):
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, **changes):
        data = self.canonical()
        data.update(changes)
        return parse_config(json.dumps(data))

    # --- builders ---------------------------------------------------------

    def build_problem(self):
        return builtin_problem(self.problem["name"], self.problem.get("params", {}))

    def build_schedule(self):
        s = self.schedule
        if s["kind"] == "power":
            return Schedule.power(s["c"], s["alpha"])
        return Schedule.constant(s["c"])

    def build_noise(self):
        m = self.noise
        if m["kind"] == "gaussian":
            return NoiseModel.gaussian(m["sigma"], q=m["q"])
        if m["kind"] == "bounded_uniform":
            return NoiseModel.bounded_uniform(m["a"], q=m["q"])
        return NoiseModel("zero", q=m["q"])

    def keep_regions(self):
        """Regions whose visits must survive thinning for the requested diagnostics."""
        out = []
        for blk in self.diagnostics:
            if blk["kind"] == "intervals":
                out.append(region_from_dict(blk["V"]))
            elif blk["kind"] == "travel_times":
                out.extend((region_from_dict(blk["from"]), region_from_dict(blk["to"])))
        return tuple(out)


def _floatify(d, keys):
    for k in keys:
        if k in d and d[k] is not None:
            d[k] = float(d[k])
    return d


def _region(desc, pointer, dim):
    try:
        region = region_from_dict(desc)
    except InputError as exc:
        raise ConfigurationError(str(exc), pointer) from None
    if region.center.size != dim:
        raise ConfigurationError(f"region has dimension {region.center.size}, problem has {dim}", pointer)
    return region


def _check_semantics(data):
    noise = data["noise"]
    if noise["q"] < 2:
        raise ConfigurationError("q must be >= 2", "/noise/q")
    try:
        problem = builtin_problem(data["problem"]["name"], data["problem"]["params"])
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), "/problem") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), "/problem/params") from None
    if len(data["x0"]) != problem.dim:
        raise ConfigurationError(f"x0 has length {len(data['x0'])}, problem dimension is {problem.dim}", "/x0")
    if not problem.constraint.contains(data["x0"]):
        raise ConfigurationError("x0 is outside the constraint set", "/x0")
    if data["seed"] + 1 > 2**64:
        raise ConfigurationError("seed must fit in 64 bits", "/seed")
    for i, blk in enumerate(data["diagnostics"]):
        at = f"/diagnostics/{i}"
        if blk["kind"] == "intervals":
            U = _region(blk["U"], at + "/U", problem.dim)
            V = _region(blk["V"], at + "/V", problem.dim)
            try:
                NeighborhoodPair(U, V)
            except ConfigurationError:
                raise ConfigurationError(
                    "closure-containment violation: closure of U must lie inside V", at
                ) from None
        elif blk["kind"] == "travel_times":
            a = _region(blk["from"], at + "/from", problem.dim)
            b = _region(blk["to"], at + "/to", problem.dim)
            if not regions_disjoint(a, b):
                raise ConfigurationError("travel-time regions must be disjoint", at)
        elif blk["kind"] == "windowed" and not blk["n"]:
            raise ConfigurationError("windowed block needs at least one n", at + "/n")
    names = [blk.get("name") for blk in data["diagnostics"] if "name" in blk]
    if len(names) != len(set(names)):
        raise ConfigurationError("diagnostic block names must be unique", "/diagnostics")


def parse_config(text) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Unknown keys are rejected. Schema errors carry the JSON pointer of the
    offending value; semantic errors (``q < 2``, ``U`` not strictly inside
    ``V``, a wrong ``x0`` length) name the failed rule.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    errors = sorted(_validator().iter_errors(raw), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        err = _deepest(errors[0])
        raise ConfigurationError(err.message, _pointer(err.absolute_path))

    data = copy.deepcopy(raw)
    data.setdefault("version", CONFIG_VERSION)
    data["problem"].setdefault("params", {})
    data["schedule"] = {**SCHEDULE_DEFAULTS[data["schedule"]["kind"]], **data["schedule"]}
    _floatify(data["schedule"], ("c", "alpha"))
    data["noise"] = {**NOISE_DEFAULTS[data["noise"]["kind"]], **data["noise"]}
    _floatify(data["noise"], ("sigma", "a", "q"))
    data.setdefault("seed", 0)
    data.setdefault("bound", DEFAULT_BOUND)
    data.setdefault("diagnostics", [])
    data.setdefault("output_dir", "runs")
    data.setdefault("thinning", None)
    data["diagnostics"] = [{**BLOCK_DEFAULTS[b["kind"]], **b} for b in data["diagnostics"]]
    for b in data["diagnostics"]:
        _floatify(b, ("T", "tail_fraction", "eps"))
    _check_semantics(data)

    return RunConfig(
        problem=data["problem"],
        schedule=data["schedule"],
        noise=data["noise"],
        x0=[float(v) for v in data["x0"]],
        n_iters=int(data["n_iters"]),
        seed=int(data["seed"]),
        bound=float(data["bound"]),
        diagnostics=data["diagnostics"],
        output_dir=data["output_dir"],
        thinning=data["thinning"],
        version=data["version"],
    )


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
