from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator


class RunConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    geometry: str = "default"
    refinement: int = Field(2, ge=0, le=8)
    # dt / t_end / lam 的定义域由求解模块检查（DomainError），这里只要求是数
    dt: float = 0.01
    t_end: float = 50.0
    theta: float = Field(1.0, ge=0.5, le=1.0)
    lam: float = Field(1.0, alias="lambda")
    betas: str = "default"
    seed: int = Field(0, ge=0)
    initial: Literal["random", "zero"] = "random"
    out: str = "out"
    svg: bool = False

    @field_validator("betas")
    @classmethod
    def _betas_parse(cls, value: str) -> str:
        from mlfsi.spectral import parse_beta_grid

        parse_beta_grid(value)
        return value.strip() or "default"

    def items(self) -> list[tuple[str, str]]:
        data = self.model_dump(by_alias=True)
        return sorted((k, str(v)) for k, v in data.items())


class MeshSummary(BaseModel):
    nodes: int
    triangles: int
    fluid_triangles: int
    solid_triangles: int
    interface_nodes: int
    interface_edges: int
    junctions: int
    outer_boundary_nodes: int
    h: float


class SimulationSummary(BaseModel):
    steps: int
    dim: int
    initial_energy: float
    final_energy: float
    decay_ratio: float
    monotone: bool
    compat_drift: float
    component_decay: dict[str, float]


class SpectrumSummary(BaseModel):
    dim: int
    refinement: int | None = None
    spectral_abscissa: float
    min_modulus: float
    axis_distance: float
    scan_points: int
    scan_min_sigma: float | None = None
    stable: bool


class CheckResult(BaseModel):
    name: str
    passed: bool
    value: float | None = None
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        value = "-" if self.value is None else format(self.value, ".3e")
        return f"{status} {self.name} {value} {self.detail}".rstrip()


class CheckReport(BaseModel):
    results: list[CheckResult]
    defaults: list[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failed(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]
