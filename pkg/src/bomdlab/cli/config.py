"""Run configuration: TOML parsing, schema validation and default resolution."""

import math
from dataclasses import dataclass

import tomli
import tomli_w

from ..errors import ConfigError
from ..units import PhysicalParams, nondimensionalize

SOLVERS = ("bomd", "bohmion", "koopmon", "tdse", "compare")
REQUIRED = object()


def _float(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"must be a number, got {value!r}", key)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", key)
    return value


def _int(value, key):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"must be an integer, got {value!r}", key)
    return value


def _bool(value, key):
    if not isinstance(value, bool):
        raise ConfigError(f"must be true or false, got {value!r}", key)
    return value


def _str(value, key):
    if not isinstance(value, str):
        raise ConfigError(f"must be a string, got {value!r}", key)
    return value


def _floats(value, key):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError("must be a non-empty list of numbers", key)
    return [_float(v, f"{key}[{i}]") for i, v in enumerate(value)]


def _rows(value, key):
    # list of vectors; bare numbers are one-dimensional vectors
    if not isinstance(value, list) or not value:
        raise ConfigError("must be a non-empty list", key)
    return [_floats(v, f"{key}[{i}]") for i, v in enumerate(value)]


def _positive(check):
    def wrapped(value, key):
        value = check(value, key)
        if value <= 0:
            raise ConfigError("must be positive", key)
        return value
    return wrapped


def _nonnegative_int(value, key):
    value = _int(value, key)
    if value < 0:
        raise ConfigError("must be non-negative", key)
    return value


POS = _positive(_float)
POS_INT = _positive(_int)

MODEL_SCHEMAS = {
    "linear_crossing": {"coupling": (POS, 1.0)},
    "shifted_oscillators": {
        "omegas": (_floats, REQUIRED),
        "centers": (_rows, REQUIRED),
        "offsets": (_floats, None),
        "couplings": (_float, 0.0),
    },
    "soft_coulomb": {
        "grid_points": (POS_INT, 32),
        "box": (POS, 12.0),
        "charges": (_floats, [1.0]),
        "softening": (POS, 1.0),
        "nuclear_softening": (POS, 1.0),
        "repulsion": (_bool, True),
    },
}

UNITS_SCHEMA = {
    "mu": (_float, None),
    "mass_ratios": (_floats, None),
    "nuclear_masses": (_floats, None),
    "spatial_dim": (POS_INT, 1),
}

RUN_SCHEMA = {
    "dt": (POS, REQUIRED),
    "steps": (_nonnegative_int, REQUIRED),
    "record_every": (POS_INT, 1),
    "seed": (_nonnegative_int, 0),
}

_ENSEMBLE = {
    "weights": (_floats, None),
    "q": (_rows, None),
    "p": (_rows, None),
    "count": (POS_INT, None),
    "q0": (_floats, None),
    "p0": (_floats, None),
    "sigma_q": (_float, 0.1),
    "sigma_p": (_float, 0.0),
    "level": (_nonnegative_int, 0),
    "check": (_bool, True),
}

SOLVER_SCHEMAS = {
    "bomd": {"q0": (_floats, REQUIRED), "p0": (_floats, REQUIRED),
             "level": (_nonnegative_int, 0)},
    "bohmion": dict(_ENSEMBLE, alpha=(POS, REQUIRED)),
    "koopmon": dict(_ENSEMBLE, alpha_q=(POS, REQUIRED), alpha_p=(POS, REQUIRED)),
    "tdse": {
        "grid_points": (POS_INT, REQUIRED),
        "domain": (_floats, REQUIRED),
        "q0": (_floats, REQUIRED),
        "p0": (_floats, REQUIRED),
        "sigma": (POS, REQUIRED),
        "surface": (_nonnegative_int, 0),
        "order": (POS_INT, 2),
        "snapshot_every": (_nonnegative_int, 0),
        "check_every": (_nonnegative_int, 0),
    },
    "compare": {
        "mu_values": (_floats, REQUIRED),
        "T": (POS, 1.0),
        "dt": (POS, 1e-3),
        "bomd_dt": (POS, None),
        "grid_points": (POS_INT, REQUIRED),
        "domain": (_floats, REQUIRED),
        "q0": (_floats, REQUIRED),
        "p0": (_floats, REQUIRED),
        "sigma_scale": (POS, math.sqrt(0.5)),
        "surface": (_nonnegative_int, 0),
        "order": (POS_INT, 2),
        "bohmion_check": (_bool, True),
        "bohmion_steps": (POS_INT, 1000),
    },
}


def _section(raw, name, schema):
    data = raw.get(name, {})
    if not isinstance(data, dict):
        raise ConfigError("must be a table", name)
    out = {}
    for key in data:
        if key not in schema:
            raise ConfigError("unknown key", f"{name}.{key}")
    for key, (check, default) in schema.items():
        path = f"{name}.{key}"
        if key in data:
            out[key] = check(data[key], path)
        elif default is REQUIRED:
            raise ConfigError("missing required key", path)
        else:
            out[key] = default
    return out


def _resolve_units(units):
    if units["nuclear_masses"] is not None:
        for key in ("mu", "mass_ratios"):
            if units[key] is not None:
                raise ConfigError("conflicts with units.nuclear_masses", f"units.{key}")
        if min(units["nuclear_masses"]) <= 0:
            raise ConfigError("must be positive", "units.nuclear_masses")
        dimless = nondimensionalize(PhysicalParams(tuple(units["nuclear_masses"])))
        units["mu"] = dimless.mu
        units["mass_ratios"] = list(dimless.mass_ratios)
    else:
        units.pop("nuclear_masses")
        if units["mu"] is None:
            units["mu"] = 1e-3
        if units["mass_ratios"] is None:
            units["mass_ratios"] = [1.0]
    if units["mu"] < 0:
        raise ConfigError("must be non-negative", "units.mu")
    if min(units["mass_ratios"]) <= 0:
        raise ConfigError("must be positive", "units.mass_ratios")
    return units


def _resolve_model(raw):
    data = raw.get("model")
    if not isinstance(data, dict):
        raise ConfigError("missing table", "model")
    kind = data.get("kind", REQUIRED)
    if kind is REQUIRED:
        raise ConfigError("missing required key", "model.kind")
    kind = _str(kind, "model.kind")
    if kind not in MODEL_SCHEMAS:
        raise ConfigError(f"must be one of {sorted(MODEL_SCHEMAS)}, got {kind!r}",
                          "model.kind")
    body = {k: v for k, v in data.items() if k != "kind"}
    model = _section({"model": body}, "model", MODEL_SCHEMAS[kind])
    if kind == "shifted_oscillators" and model["offsets"] is None:
        model["offsets"] = [0.0] * len(model["omegas"])
    return dict(kind=kind, **model)


def _resolve_ensemble(section, name):
    explicit = [section[k] is not None for k in ("weights", "q", "p")]
    sampled = section["count"] is not None
    if sampled == any(explicit):
        raise ConfigError("needs either count/q0/p0 or explicit weights/q/p", name)
    if sampled:
        for key in ("q0", "p0"):
            if section[key] is None:
                raise ConfigError("missing required key", f"{name}.{key}")
        for key in ("weights", "q", "p"):
            section.pop(key)
    else:
        if not all(explicit):
            missing = [k for k, e in zip(("weights", "q", "p"), explicit) if not e][0]
            raise ConfigError("missing required key", f"{name}.{missing}")
        for key in ("count", "q0", "p0", "sigma_q", "sigma_p"):
            section.pop(key)
    return section


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration; ``resolved`` is what gets echoed to disk."""

    solver: str
    resolved: dict

    @property
    def units(self):
        return self.resolved["units"]

    @property
    def model(self):
        return self.resolved["model"]

    @property
    def run(self):
        return self.resolved.get("run", {})

    @property
    def params(self):
        return self.resolved[self.solver]

    @property
    def seed(self):
        return self.resolved["run"]["seed"]

    def to_toml(self) -> str:
        return tomli_w.dumps(self.resolved)


def parse_config(text, solver, seed=None) -> RunConfig:
    """Validate TOML ``text`` for ``solver`` and fill every default.

    Examples
    --------
    >>> cfg = parse_config('[model]\\nkind = "linear_crossing"\\n'
    ...                    '[run]\\ndt = 0.01\\nsteps = 10\\n'
    ...                    '[bomd]\\nq0 = [0.5]\\np0 = [0.0]\\n', "bomd")
    >>> cfg.model, cfg.run["seed"]
    ({'kind': 'linear_crossing', 'coupling': 1.0}, 0)
    """
    if solver not in SOLVERS:
        raise ConfigError(f"unknown solver {solver!r}", "run")
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    allowed = {"units", "model", "run", solver}
    for key in raw:
        if key not in allowed:
            raise ConfigError("unknown key", key)
    resolved = {"units": _resolve_units(_section(raw, "units", UNITS_SCHEMA)),
                "model": _resolve_model(raw)}
    run_schema = RUN_SCHEMA
    if solver == "compare":
        run_schema = {"seed": RUN_SCHEMA["seed"]}
    resolved["run"] = _section(raw, "run", run_schema)
    if seed is not None:
        resolved["run"]["seed"] = _nonnegative_int(seed, "run.seed")
    params = _section(raw, solver, SOLVER_SCHEMAS[solver])
    if solver in ("bohmion", "koopmon"):
        params = _resolve_ensemble(params, solver)
    if solver == "compare" and params["bomd_dt"] is None:
        params["bomd_dt"] = params["dt"]
    # tomli_w cannot write None; drop unset optional keys so the echo round-trips
    resolved[solver] = {k: v for k, v in params.items() if v is not None}
    return RunConfig(solver, resolved)


def load_config(path, solver, seed=None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, solver, seed)
