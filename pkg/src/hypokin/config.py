"""Run configuration: one YAML or JSON file drives a whole experiment."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PotentialBlock(_Strict):
    kind: Literal["quadratic", "radial_poly", "double_well"]
    n: int = 1
    M_inv: Optional[list[list[float]]] = None
    p: Optional[list[float]] = None
    q: float = 0.0
    r: Optional[float] = None
    k: Optional[int] = None
    V0: Optional[Union[list[float], dict]] = None
    r1: Optional[float] = None
    r2: Optional[float] = None

    @model_validator(mode="after")
    def _required(self):
        need = {"quadratic": ["M_inv"], "radial_poly": ["r", "k"], "double_well": ["r1", "r2"]}
        missing = [f for f in need[self.kind] if getattr(self, f) is None]
        if missing:
            raise ValueError(f"potential kind {self.kind!r} needs {missing}")
        return self

    def spec(self) -> dict:
        return self.model_dump(exclude_none=True)


class ModelBlock(_Strict):
    nu: float = Field(gt=0)
    sigma: float = Field(gt=0)


class BoxBlock(_Strict):
    lo: list[float]
    hi: list[float]


class AssumptionBlock(_Strict):
    box: BoxBlock = BoxBlock(lo=[-5.0], hi=[5.0])
    resolution: Union[int, list[int]] = 201
    c: Optional[float] = None
    tau: Optional[float] = None
    condition: Literal["full", "sufficient"] = "full"


class RateBlock(_Strict):
    c_pi: Union[float, Literal["quadratic-auto"]] = "quadratic-auto"
    epsilon_b: Optional[float] = None


class CertifyBlock(_Strict):
    t0: float = Field(0.1, gt=0)
    lyapunov_tol: float = 1e-8


class PropagatorBlock(_Strict):
    window: tuple[float, float] = (20.0, 50.0)


class InitBlock(_Strict):
    kind: Literal["steady", "gaussian_shifted", "h_perturbation", "rough_indicator"] = "gaussian_shifted"
    mean: Optional[list[float]] = None
    cov: Optional[list[list[float]]] = None
    amplitude: Optional[float] = None
    center: Optional[list[float]] = None
    width: Optional[float] = None
    interval: Optional[list[float]] = None
    smoothing: Optional[float] = None


class HypoBlock(_Strict):
    window: tuple[float, float] = (2e-3, 2e-2)
    dt: float = Field(1e-4, gt=0)
    nx: int = 256
    nv: int = 256
    f0: InitBlock = InitBlock(kind="rough_indicator", interval=[-1.0, 1.0], smoothing=0.0)


class SolverBlock(_Strict):
    nx: int = 128
    nv: int = 128
    dt: Optional[float] = None
    T: float = Field(10.0, gt=0)
    sample_every: int = Field(10, ge=1)
    P: Literal["case", "identity"] = "case"
    f0: InitBlock = InitBlock()
    snapshot: bool = False
    hypo: HypoBlock = HypoBlock()


class SweepBlock(_Strict):
    alpha0: list[float] = []
    nu: list[float] = []


class ReportBlock(_Strict):
    include: list[Literal["check", "rate", "certify", "propagator", "simulate", "hypo"]] = [
        "check", "rate", "certify", "propagator"]
    sweep: SweepBlock = SweepBlock()


class OutputBlock(_Strict):
    dir: str = "out"
    prefix: str = ""


class RunConfig(_Strict):
    potential: PotentialBlock
    model: ModelBlock
    assumption: AssumptionBlock = AssumptionBlock()
    rate: RateBlock = RateBlock()
    certify: CertifyBlock = CertifyBlock()
    propagator: PropagatorBlock = PropagatorBlock()
    solver: SolverBlock = SolverBlock()
    report: ReportBlock = ReportBlock()
    output: OutputBlock = OutputBlock()


def _set_path(d: dict, dotted: str, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ValueError(f"override {dotted!r} goes through a non-mapping")
    d[keys[-1]] = value


def load_raw(path) -> dict:
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return data


def load(path, overrides: list[str] = ()) -> RunConfig:
    """Parse the file, apply KEY.PATH=VALUE overrides (values read as YAML), validate."""
    data = load_raw(path)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not KEY=VALUE")
        key, val = item.split("=", 1)
        _set_path(data, key.strip(), yaml.safe_load(val))
    return RunConfig.model_validate(data)
