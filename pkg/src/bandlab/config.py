"""JSON experiment configuration: schema, physical validation and conversion to ExperimentSpec."""

from __future__ import annotations

import json
import math
import warnings
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .harness import DEFAULT_EPS_GRID, OBSERVABLES, ExperimentSpec, SpecError, validate_spec
from .lattice import BandProfile, BandwidthWarning, normalize_class

MUCH_LESS_EXPONENT = 0.05


class ConfigError(ValueError):
    """Configuration document is malformed or violates a physical constraint."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class RapidDecayParams(_Strict):
    density: Literal["gaussian"] = "gaussian"
    delta: float = 0.1


class HeavyTailParams(_Strict):
    beta: float = 1.5
    h0: float = 1.0
    correction: float = 0.0
    a: float = 0.25
    b: float = 0.45
    delta: float = 0.1


class ProfileSection(_Strict):
    kind: Literal["rapid-decay", "heavy-tail"] = "rapid-decay"
    params: Union[RapidDecayParams, HeavyTailParams, None] = None

    def resolved(self) -> Union[RapidDecayParams, HeavyTailParams]:
        if self.params is not None:
            return self.params
        return HeavyTailParams() if self.kind == "heavy-tail" else RapidDecayParams()

    @field_validator("params", mode="before")
    @classmethod
    def _params_by_kind(cls, v, info):
        if v is None or isinstance(v, BaseModel):
            return v
        kind = info.data.get("kind", "rapid-decay")
        model = HeavyTailParams if kind == "heavy-tail" else RapidDecayParams
        return model.model_validate(v)


class EnsembleSection(_Strict):
    d: int = Field(1, ge=1, le=3)
    L: int = Field(64, ge=2)
    W: float = Field(8.0, gt=0)
    profile: ProfileSection = ProfileSection()
    symmetry_class: str = Field("complex-Hermitian", alias="class")
    distribution: Literal["gaussian", "bernoulli"] = "gaussian"
    epsilon: float = Field(0.0, ge=0.0, le=0.5)

    @field_validator("symmetry_class")
    @classmethod
    def _known_class(cls, v: str) -> str:
        return normalize_class(v)


class SpectralSection(_Strict):
    kappa: float = Field(0.1, gt=0, lt=2)
    gamma: float = Field(0.1, gt=0, lt=1)
    E_list: list[float] = [0.0]
    eta_list: Optional[list[float]] = None
    eta_points: int = Field(5, ge=1)


class RunSection(_Strict):
    trials: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    observables: list[str] = ["lambda", "residual", "profile"]
    memory_budget_mb: float = Field(4096.0, gt=0)
    eps_grid: list[float] = list(DEFAULT_EPS_GRID)
    deloc_eps: float = Field(0.1, gt=0)
    deloc_ell: Optional[float] = None

    @field_validator("observables")
    @classmethod
    def _known_observables(cls, v: list[str]) -> list[str]:
        bad = [o for o in v if o not in OBSERVABLES]
        if bad:
            raise ValueError(f"unknown observables {bad}; allowed: {list(OBSERVABLES)}")
        return v


class OutputSection(_Strict):
    directory: str = "results"
    formats: list[Literal["json", "csv"]] = ["json", "csv"]


class ConfigDocument(_Strict):
    ensemble: EnsembleSection = EnsembleSection()
    spectral: SpectralSection = SpectralSection()
    run: RunSection = RunSection()
    output: OutputSection = OutputSection()

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)

    def band_profile(self) -> BandProfile:
        ens = self.ensemble
        p = ens.profile.resolved()
        if ens.profile.kind == "heavy-tail":
            return BandProfile("heavy-tail", ens.W, beta=p.beta, h0=p.h0, correction=p.correction,
                               a=p.a, b=p.b, delta=p.delta)
        return BandProfile("rapid-decay", ens.W, delta=p.delta)

    def eta_grid(self) -> list[float]:
        if self.spectral.eta_list is not None:
            return list(self.spectral.eta_list)
        ens = self.ensemble
        N = ens.L**ens.d
        lo = (ens.W / N) ** 2
        if self.spectral.eta_points == 1:
            return [1.0]
        return [float(v) for v in np.geomspace(lo, 1.0, self.spectral.eta_points)]

    def to_spec(self, seed: Optional[int] = None) -> ExperimentSpec:
        ens, spec, run = self.ensemble, self.spectral, self.run
        return ExperimentSpec(
            d=ens.d, L=ens.L, profile=self.band_profile(), symmetry_class=ens.symmetry_class,
            distribution=ens.distribution, epsilon=ens.epsilon, E_list=tuple(spec.E_list),
            eta_list=tuple(self.eta_grid()), observables=tuple(run.observables), trials=run.trials,
            master_seed=run.seed if seed is None else int(seed), eps_grid=tuple(run.eps_grid),
            kappa=spec.kappa, gamma=spec.gamma, memory_budget_mb=run.memory_budget_mb,
            deloc_eps=run.deloc_eps, deloc_ell=run.deloc_ell,
        )


def parse_config(text: str) -> ConfigDocument:
    try:
        return ConfigDocument.model_validate_json(text)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines)) from None


def load_config(path: Union[str, Path]) -> ConfigDocument:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)


def physical_check(doc: ConfigDocument, seed: Optional[int] = None) -> tuple[ExperimentSpec, list[str]]:
    """Convert to a spec and enforce the physical constraints.

    Returns the spec and a list of warnings (band width below L^delta).
    """
    ens = doc.ensemble
    if ens.W > ens.L:
        raise ConfigError(f"band width W={ens.W} must not exceed the torus side L={ens.L}")
    try:
        spec = doc.to_spec(seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BandwidthWarning)
        try:
            validate_spec(spec)
        except SpecError as exc:
            raise ConfigError(str(exc)) from None
    notes.extend(str(w.message) for w in caught if issubclass(w.category, BandwidthWarning))
    return spec, notes


def much_less(a: float, b: float, N: int, c: float = MUCH_LESS_EXPONENT) -> bool:
    """a << b read as a <= N^(-c) b."""
    return a <= N**-c * b


def mean_field_hypotheses(N: int, W: float, eps: float, eta: float, c: float = MUCH_LESS_EXPONENT) -> dict[str, bool]:
    """Conditions for complete resolvent delocalization of the mixed ensemble."""
    s = eps + eta
    return {
        "broadening_vs_width": much_less(W**-0.5, s, N, c),
        "eta_lower": much_less(1.0 / (W * s), eta, N, c),
        "eta_upper": eta <= W * math.sqrt(s) / N,
    }


def dump_config(doc: ConfigDocument, path: Union[str, Path]) -> None:
    Path(path).write_text(doc.to_json() + "\n")


def example_config() -> dict:
    return json.loads(ConfigDocument().to_json())
