"""Run configuration: a JSON document validated before any computation."""
from __future__ import annotations

import hashlib
import json
import math
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .model import ClippedLinear, Constant, ExpSigmoid, NetworkModel, PopulationParams

__all__ = ["RunConfig", "ModelBlock", "RunBlock", "parse_config", "serialize", "config_hash", "load_config"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExpSigmoidSpec(_Strict):
    kind: Literal["exp_sigmoid"]
    scale: float = Field(gt=0)
    threshold: float = Field(gt=0)

    def build(self):
        return ExpSigmoid(self.scale, self.threshold)


class ClippedLinearSpec(_Strict):
    kind: Literal["clipped_linear"]
    base: float = Field(gt=0)
    slope: float = Field(ge=0)
    cap: float = Field(gt=0)

    def build(self):
        return ClippedLinear(self.base, self.slope, self.cap)


class ConstantSpec(_Strict):
    kind: Literal["constant"]
    value: float = Field(gt=0)

    def build(self):
        return Constant(self.value)


RateSpec = Annotated[Union[ExpSigmoidSpec, ClippedLinearSpec, ConstantSpec], Field(discriminator="kind")]


class PopulationBlock(_Strict):
    eta: int = Field(ge=1)
    nu: float = Field(gt=0)
    rate: RateSpec
    c: Literal[-1, 1] | None = None
    n_neurons: int = Field(default=50, ge=1)
    p: float | None = Field(default=None, gt=0, lt=1)


class ModelBlock(_Strict):
    populations: tuple[PopulationBlock, PopulationBlock]

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        """Resolve ``c`` by position (-1, +1) and ``p`` from the population sizes."""
        if not isinstance(data, dict) or not isinstance(data.get("populations"), (list, tuple)):
            return data
        pops = [dict(q) if isinstance(q, dict) else q for q in data["populations"]]
        if len(pops) == 2 and all(isinstance(q, dict) for q in pops):
            for i, q in enumerate(pops):
                if q.get("c") is None:
                    q["c"] = (-1, 1)[i]
            if all(q.get("p") is None for q in pops):
                sizes = [q.get("n_neurons", 50) for q in pops]
                if all(isinstance(n, int) and not isinstance(n, bool) and n > 0 for n in sizes):
                    pops[0]["p"] = sizes[0] / sum(sizes)
                    pops[1]["p"] = sizes[1] / sum(sizes)
        return {**data, "populations": pops}

    @model_validator(mode="after")
    def _check_p(self):
        ps = [q.p for q in self.populations]
        if any(v is not None for v in ps):
            if any(v is None for v in ps):
                raise ValueError("p must be given for both populations or neither")
            if abs(sum(ps) - 1.0) > 1e-12:
                raise ValueError(f"p values must sum to 1, got {sum(ps)!r}")
        return self

    def build(self) -> NetworkModel:
        return NetworkModel(tuple(
            PopulationParams(q.eta, q.nu, q.c, q.n_neurons, q.rate.build(), q.p) for q in self.populations
        ))


Mode = Literal["pdmp", "sde", "ode", "bounds", "converge", "compare", "timing", "density"]


class RunBlock(_Strict):
    mode: Mode
    seed: int = Field(default=0, ge=0)
    out: str = "results"
    x0: list[float] | None = None
    # time discretisation
    t_max: float | None = Field(default=None, gt=0)
    n_steps: int | None = Field(default=None, ge=1)
    delta: float | None = Field(default=None, gt=0)
    stride: int = Field(default=1, ge=1)
    scheme: Literal["em", "lie_trotter", "strang", "ode_lie_trotter", "ode_strang"] = "strang"
    noise_scale: float | None = Field(default=None, ge=0)
    # thinning
    bound: Literal["global", "local"] = "local"
    record: Literal["full", "spikes", "none"] = "full"
    # bounds curves
    times: list[float] | None = None
    # convergence
    schemes: list[Literal["em", "lie_trotter", "strang"]] = ["em", "lie_trotter", "strang"]
    deltas: list[float] = [1e-3, 1e-2, 1e-1]
    M: int = Field(default=200, ge=2)
    t_star: float = Field(default=1.0, gt=0)
    ref_delta: float = Field(default=1e-4, gt=0)
    # comparison, density, timing
    t_long: float = Field(default=2e4, gt=0)
    burn_in: float = Field(default=0.1, ge=0, lt=1)
    n_list: list[int] = [20, 50, 100, 200]
    bound_kinds: list[Literal["global", "local"]] = ["global", "local"]
    repeats: int = Field(default=5, ge=3)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_time(self):
        if self.mode in ("sde", "ode"):
            if self.delta is None:
                raise ValueError(f"mode {self.mode!r} needs delta")
            if (self.n_steps is None) == (self.t_max is None):
                raise ValueError("give exactly one of n_steps and t_max")
        if self.mode == "pdmp" and self.t_max is None:
            raise ValueError("mode 'pdmp' needs t_max")
        if self.mode == "ode" and not self.scheme.startswith("ode_"):
            raise ValueError("mode 'ode' needs an ode_* scheme")
        return self

    def steps(self) -> int:
        if self.n_steps is not None:
            return self.n_steps
        n = round(self.t_max / self.delta)
        if abs(n * self.delta - self.t_max) > 1e-9 * self.t_max:
            raise ValueError("t_max must be a multiple of delta")
        return int(n)


class RunConfig(_Strict):
    model: ModelBlock
    run: RunBlock

    @model_validator(mode="after")
    def _check_x0(self):
        if self.run.x0 is not None:
            kappa = sum(q.eta + 1 for q in self.model.populations)
            if len(self.run.x0) != kappa:
                raise ValueError(f"x0 must have {kappa} entries, got {len(self.run.x0)}")
            if not all(math.isfinite(v) for v in self.run.x0):
                raise ValueError("x0 entries must be finite")
        return self


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(document: str | dict) -> RunConfig:
    """Validate a JSON document (or already-decoded mapping) into a RunConfig.

    Raises
    ------
    ConfigError
        On malformed JSON or any schema violation; the message names the
        offending key path.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    except ValueError as exc:  # raised from model construction
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize(config: RunConfig) -> str:
    """Canonical JSON with every default resolved."""
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2)


def config_hash(config: RunConfig) -> str:
    """Digest of the canonical document without ``run.out``.

    The output directory does not change any result, so reruns written to
    different places carry the same hash and byte-identical files.
    """
    doc = config.model_dump(mode="json")
    doc["run"].pop("out")
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
