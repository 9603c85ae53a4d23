"""Run configuration: JSON schema, validation and conversion to model objects."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import jsonschema

from .linewidth import SpinCenterParams
from .material import DomainError, MaterialParams, MobilityFit, TrapParams
from .optimizer import PARAMETER_NAMES, DesignBounds, OptimizerConfig
from .poisson import DiodeDesign, GridConfig

SCENARIOS = ("solve", "linewidth", "leakage", "sweep", "optimize")
SWEEP_PARAMETERS = PARAMETER_NAMES + ("T", "N_n/N_a")


class ConfigError(ValueError):
    """Configuration could not be parsed or failed validation."""


def _number_block(cls, exclude=()):
    props = {f.name: {"type": ["number", "null"] if f.default is None else "number"}
             for f in fields(cls) if f.name not in exclude}
    return {"type": "object", "properties": props, "additionalProperties": False}


_material = _number_block(MaterialParams, exclude=("mobility", "trap", "printed_eps0"))
_material["properties"].update(mobility=_number_block(MobilityFit), trap=_number_block(TrapParams),
                               printed_eps0={"type": "boolean"})
_grid = _number_block(GridConfig)
_grid["properties"]["n_points"] = {"type": "integer", "minimum": 101}
_grid["properties"]["newton_max_iter"] = {"type": "integer", "minimum": 1}
_grid["properties"]["layer_cells"] = {"type": ["array", "null"], "items": {"type": "integer", "minimum": 8},
                                      "minItems": 3, "maxItems": 3}
_optimizer = _number_block(OptimizerConfig, exclude=("D_scales",))
for _name in ("n_max_proj", "n_conv", "k_window", "l_avg", "max_iter", "escalation_window", "threads"):
    _optimizer["properties"][_name] = {"type": "integer", "minimum": 1}
_optimizer["properties"].update(
    active={"type": "array", "items": {"enum": list(PARAMETER_NAMES)}, "minItems": 1, "uniqueItems": True},
    bounds=_number_block(DesignBounds),
    D_scales={"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
              "minItems": len(PARAMETER_NAMES), "maxItems": len(PARAMETER_NAMES)},
)
_axis = {
    "type": "object",
    "properties": {
        "parameter": {"enum": list(SWEEP_PARAMETERS)},
        "start": {"type": "number"},
        "stop": {"type": "number"},
        "steps": {"type": "integer", "minimum": 1},
        "spacing": {"enum": ["linear", "log"]},
    },
    "required": ["parameter", "start", "stop", "steps"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "diode-qopt run configuration",
    "type": "object",
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "material": _material,
        "design": _number_block(DiodeDesign),
        "spin": _number_block(SpinCenterParams),
        "grid": _grid,
        "optimizer": _optimizer,
        "sweep": {
            "type": "object",
            "properties": {"axes": {"type": "array", "items": _axis, "minItems": 1, "maxItems": 2}},
            "required": ["axes"],
            "additionalProperties": False,
        },
        "linewidth": {
            "type": "object",
            "properties": {"n_positions": {"type": "integer", "minimum": 2}},
            "additionalProperties": False,
        },
        "leakage": {
            "type": "object",
            "properties": {
                "voltages": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "x_def": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"scenario": {"const": "sweep"}}, "required": ["scenario"]},
         "then": {"required": ["sweep"]}},
        {"if": {"properties": {"scenario": {"const": "optimize"}}, "required": ["scenario"]},
         "then": {"required": ["optimizer"], "properties": {"optimizer": {"required": ["active"]}}}},
    ],
}


@dataclass
class RunConfig:
    scenario: str
    material: MaterialParams = field(default_factory=MaterialParams)
    design: DiodeDesign = field(default_factory=DiodeDesign)
    spin: SpinCenterParams = field(default_factory=SpinCenterParams)
    grid: GridConfig = field(default_factory=GridConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    active: tuple = ()
    bounds: DesignBounds = field(default_factory=DesignBounds)
    sweep_axes: tuple = ()
    n_positions: int = 200
    leak_voltages: tuple = ()
    leak_depths: tuple = (6.0, 7.5, 10.0, 15.0, 20.0, 30.0, 50.0, 100.0)
    out_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _format_error(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"field {where}: {err.message}"


def parse_config(raw: dict, scenario: str | None = None) -> RunConfig:
    """Validate a decoded JSON document and build the run configuration."""
    if scenario is not None:
        if raw.get("scenario", scenario) != scenario:
            raise ConfigError(f"field scenario: config says {raw['scenario']!r} but {scenario!r} was requested")
        raw = {**raw, "scenario": scenario}
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(_format_error(e) for e in errors))
    if "scenario" not in raw:
        raise ConfigError("field scenario: missing")
    def build(block, make):
        try:
            return make()
        except (DomainError, ValueError, TypeError) as exc:
            raise ConfigError(f"field {block}: {exc}") from exc

    mat = dict(raw.get("material", {}))
    mobility = build("material/mobility", lambda: MobilityFit(**mat.pop("mobility", {})))
    trap = build("material/trap", lambda: TrapParams(**mat.pop("trap", {})))
    material = build("material", lambda: MaterialParams(mobility=mobility, trap=trap, **mat))
    design = build("design", lambda: DiodeDesign(**raw.get("design", {})))
    spin = build("spin", lambda: SpinCenterParams(**raw.get("spin", {})))
    grid = build("grid", lambda: GridConfig(**raw.get("grid", {})))
    opt = dict(raw.get("optimizer", {}))
    active = tuple(opt.pop("active", ()))
    bounds = build("optimizer/bounds", lambda: DesignBounds(**opt.pop("bounds", {})))
    optimizer = build("optimizer", lambda: OptimizerConfig(**opt))
    axes = tuple(raw.get("sweep", {}).get("axes", ()))
    for axis in axes:
        if axis.get("spacing") == "log" and (axis["start"] <= 0 or axis["stop"] <= 0):
            raise ConfigError(f"field sweep/axes/{axis['parameter']}: log spacing needs positive bounds")
    leak = raw.get("leakage", {})
    out = RunConfig(
        scenario=raw["scenario"], material=material, design=design, spin=spin, grid=grid,
        optimizer=optimizer, active=active, bounds=bounds, sweep_axes=axes,
        n_positions=raw.get("linewidth", {}).get("n_positions", 200),
        leak_voltages=tuple(leak.get("voltages", (design.V,))),
        out_dir=raw.get("output", {}).get("dir", "out"), raw=raw,
    )
    if "x_def" in leak:
        out.leak_depths = tuple(leak["x_def"])
    if any(x <= material.trap.D_depth for x in out.leak_depths):
        raise ConfigError(f"field leakage/x_def: depths must exceed D_depth={material.trap.D_depth} nm")
    return out


def load_config(path, scenario: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<root>: top level must be a JSON object")
    return parse_config(raw, scenario)


if __name__ == "__main__":
    print(json.dumps(SCHEMA, indent=2))
