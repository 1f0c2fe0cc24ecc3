"""
Configuration schema and loading for AlmostISS.

A config is one JSON document with the sections ``problem``, ``algorithm``,
``verify``, ``sim`` and ``output``. Only ``problem`` is required; every other
value has a default here. Expressions are parsed when the config is loaded so
that mistakes surface before any computation.
"""

import json
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError

from .comparison import ComparisonFn, GAIN_VARS
from .expr import parse
from .intervals import AlgorithmParams
from .models import (
    ConfigError,
    ConfigIoError,
    ExpressionError,
    GainClass,
    InnerComposition,
    InputKind,
    SchemaError,
)
from .regions import StorageFn
from .sim import InterconnectionSpec, input_names, state_names
from .utils import read_json
from .verify import DpiBlock

Box = Dict[str, Tuple[float, float]]

GAIN_FIELDS = ("gamma12", "gamma21", "gamma1", "gamma2", "alpha1", "alpha2")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DpiBlockConfig(_Section):
    """Density certificate for the gap set A_k minus B_{k-1}."""
    k: int = Field(ge=1)
    rho: str
    q: str
    gamma_k: str
    domain_box: Dict[str, Tuple[float, float]]


class ProblemConfig(_Section):
    """The interconnection, stated as expression strings."""
    n1: int = Field(ge=1)
    n2: int = Field(ge=1)
    m1: int = Field(default=0, ge=0)
    m2: int = Field(default=0, ge=0)
    f1: List[str]
    f2: List[str]
    v1: str
    v2: str
    gamma12: str
    gamma21: str
    gamma1: str = "s"
    gamma2: str = "s"
    alpha1: str = "s"
    alpha2: str = "s"
    gain_classes: Dict[str, GainClass] = Field(
        default_factory=dict, description="Claimed class per gain field; K_inf when absent"
    )
    dpi_blocks: List[DpiBlockConfig] = Field(default_factory=list)


class AlgorithmConfig(_Section):
    """Interval search parameters."""
    delta: float = Field(default=1e-2, gt=0)
    eps_fix: float = Field(default=1e-9, gt=0)
    eps_conv: float = Field(default=1e-10, gt=0)
    s_divergence: float = Field(default=1e9, gt=0)
    max_inner_iters: int = Field(default=10_000, gt=0)
    max_outer_iters: int = Field(default=1_000, gt=0)


class VerifyConfig(_Section):
    """Sampling, grid and tolerance settings of the checks."""
    fd_step: float = Field(default=1e-5, gt=0)
    fd_slack: float = Field(default=1e-6, ge=0)
    gamma_tol: float = Field(default=1e-9, ge=0)
    grid: int = Field(default=16, ge=8)
    samples: int = Field(default=1000, ge=100)
    sgc_samples: int = Field(default=100, ge=10)
    cover_samples: int = Field(default=10_000, ge=1)
    validation_grid: int = Field(default=200, ge=100)
    validation_s_max: float = Field(default=1e14, gt=0)
    probe_factor: float = Field(default=1e6, gt=0)
    inversion_tol: float = Field(default=1e-12, gt=0)
    a_k_inner_composition: InnerComposition = InnerComposition.AS_PRINTED
    sample_box: Dict[str, Tuple[float, float]] = Field(
        default_factory=dict, description="Bounds for the ISS-Lyapunov samples; states default to [-2, 2], inputs to [-1, 1]"
    )
    dpi_u_values: List[float] = Field(default_factory=lambda: [0.0])
    max_workers: Optional[int] = Field(default=None, ge=1)


class SimConfig(_Section):
    """Ensemble settings."""
    n_runs: int = Field(default=100, ge=100)
    ic_box: Dict[str, Tuple[float, float]] = Field(
        default_factory=dict, description="Initial-condition box; states default to [-2, 2]"
    )
    u_levels: List[float] = Field(default_factory=lambda: [0.0])
    t_end: float = Field(default=20.0, gt=0)
    h: float = Field(default=1e-3, gt=0)
    seed: int = Field(default=0, ge=0)
    tail_fraction: float = Field(default=0.2, gt=0, le=0.5)
    blowup_threshold: float = Field(default=1e8, gt=0)
    convergence_tol: float = Field(default=1e-3, gt=0)
    input_kind: InputKind = InputKind.CONSTANT
    input_frequency: float = Field(default=1.0, gt=0)
    input_phase: float = 0.0
    input_dwell: float = Field(default=1.0, gt=0)
    aiss_min_fraction: float = Field(default=1.0, ge=0, le=1)
    theorem1_samples: int = Field(default=100, ge=1)
    theorem1_input_bound: float = Field(default=0.1, ge=0)
    theorem1_min_fraction: float = Field(default=1.0, ge=0, le=1)
    max_workers: Optional[int] = Field(default=None, ge=1)

    def input_options(self) -> Dict[str, float]:
        return {"frequency": self.input_frequency, "phase": self.input_phase, "dwell": self.input_dwell}


class OutputConfig(_Section):
    """Where and how results are written."""
    directory: str = "almostiss-out"
    format: Literal["json", "csv", "both"] = "both"
    curve_points: int = Field(default=200, ge=2)
    curve_s_max: Optional[float] = Field(default=None, gt=0)


class Config(_Section):
    """A complete, schema-validated configuration."""

    problem: ProblemConfig
    algorithm: AlgorithmConfig = Field(default_factory=AlgorithmConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    _spec: Optional[InterconnectionSpec] = PrivateAttr(default=None)

    @property
    def spec(self) -> InterconnectionSpec:
        if self._spec is None:
            self._spec = build_spec(self)
        return self._spec

    def algorithm_params(self) -> AlgorithmParams:
        return AlgorithmParams(**self.algorithm.model_dump())

    @property
    def state_names(self) -> List[str]:
        return state_names(self.problem.n1 + self.problem.n2)

    @property
    def input_names(self) -> List[str]:
        return input_names(self.problem.m1 + self.problem.m2)

    def sample_box(self) -> Box:
        box = {name: (-2.0, 2.0) for name in self.state_names}
        box.update({name: (-1.0, 1.0) for name in self.input_names})
        box.update(self.verify.sample_box)
        return box

    def ic_box(self) -> Box:
        box = {name: (-2.0, 2.0) for name in self.state_names}
        box.update(self.sim.ic_box)
        return box


def _json_path(loc: Tuple[Any, ...]) -> str:
    path = "$"
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def _parse_field(path: str, text: str, allowed) -> Any:
    try:
        return parse(text, allowed)
    except ExpressionError as e:
        raise ConfigError(path, e)


def build_spec(config: Config) -> InterconnectionSpec:
    """
    Parse every expression of the problem section.

    Raises:
        ConfigError: With the JSON path of the first field that fails
    """
    p = config.problem
    states = config.state_names
    inputs = config.input_names
    sub1, sub2 = states[: p.n1], states[p.n1:]
    in1, in2 = inputs[: p.m1], inputs[p.m1:]

    for name, exprs, expected in (("f1", p.f1, p.n1), ("f2", p.f2, p.n2)):
        if len(exprs) != expected:
            raise ConfigError(f"$.problem.{name}", f"expected {expected} component(s), got {len(exprs)}")

    f1 = tuple(_parse_field(f"$.problem.f1[{i}]", t, states + in1 + ["t"]) for i, t in enumerate(p.f1))
    f2 = tuple(_parse_field(f"$.problem.f2[{i}]", t, states + in2 + ["t"]) for i, t in enumerate(p.f2))
    v1 = StorageFn(_parse_field("$.problem.v1", p.v1, sub1), tuple(sub1), "v1")
    v2 = StorageFn(_parse_field("$.problem.v2", p.v2, sub2), tuple(sub2), "v2")

    gains = {}
    for name in GAIN_FIELDS:
        body = _parse_field(f"$.problem.{name}", getattr(p, name), GAIN_VARS)
        gains[name] = ComparisonFn(
            body=body,
            claimed_class=p.gain_classes.get(name, GainClass.K_INF),
            s_max=config.verify.validation_s_max,
            name=name,
        )

    blocks = []
    for i, block in enumerate(p.dpi_blocks):
        path = f"$.problem.dpi_blocks[{i}]"
        missing = [name for name in states if name not in block.domain_box]
        if missing:
            raise ConfigError(f"{path}.domain_box", f"missing bounds for {missing}")
        blocks.append(
            DpiBlock(
                k=block.k,
                rho=_parse_field(f"{path}.rho", block.rho, states),
                q=_parse_field(f"{path}.q", block.q, states),
                gamma_k=ComparisonFn(
                    _parse_field(f"{path}.gamma_k", block.gamma_k, GAIN_VARS),
                    s_max=config.verify.validation_s_max,
                    name=f"gamma_{block.k}",
                ),
                domain_box=dict(block.domain_box),
            )
        )

    return InterconnectionSpec(
        n1=p.n1, n2=p.n2, m1=p.m1, m2=p.m2,
        f1=f1, f2=f2, v1=v1, v2=v2,
        dpi_blocks=tuple(blocks),
        **gains,
    )


def parse_config(data: Any) -> Config:
    """
    Validate a decoded JSON document and parse its expressions.

    Raises:
        SchemaError: If the document does not match the schema
        ConfigError: If an expression does not parse
    """
    try:
        config = Config.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise SchemaError(_json_path(first["loc"]), first["msg"])
    config._spec = build_spec(config)
    return config


def load_config(path) -> Config:
    """
    Load, schema-check and parse a JSON config file.

    Raises:
        ConfigIoError: If the file cannot be read
        SchemaError: If it is not valid JSON or does not match the schema
        ConfigError: If an expression does not parse

    Examples:
        >>> config = load_config("tests/fixtures/square.json")
        >>> config.problem.gamma12
        's^2'
    """
    try:
        data = read_json(path)
    except OSError as e:
        raise ConfigIoError(f"Cannot read config {path}: {e}")
    except json.JSONDecodeError as e:
        raise SchemaError("$", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    return parse_config(data)
