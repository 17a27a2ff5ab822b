"""
Pydantic schema for TOML run configurations
"""

import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

import src.config.env as env
from src.app.exceptions import ConfigError
from src.app.models.automaton_model import GateLayout
from src.app.models.lattice_model import ModelSpec

Command = Literal["spectrum", "entanglement-scan", "quench", "dw", "automaton", "fragmentation"]


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(Section):
    r: int = Field(2, ge=1, description="Constraint range")
    t: Optional[List[float]] = Field(None, description="Hopping amplitudes t_1..t_r")

    @model_validator(mode="after")
    def _amplitudes(self) -> "ModelConfig":
        if self.t is not None and len(self.t) != self.r:
            raise ValueError(f"t needs {self.r} entries, got {len(self.t)}")
        return self

    def to_spec(self) -> ModelSpec:
        return ModelSpec(r=self.r, t=tuple(self.t) if self.t is not None else None)


class GeometryConfig(Section):
    Np: int = Field(5, ge=1, description="Particle number")
    L: Optional[int] = Field(None, ge=1, description="Sites; default L*_r(Np)")
    sweep: List[int] = Field(default_factory=list, description="Extra Np values for scaling runs")

    @model_validator(mode="after")
    def _fits(self) -> "GeometryConfig":
        if self.L is not None and self.Np > self.L:
            raise ValueError(f"Np={self.Np} exceeds L={self.L}")
        return self


class EvolutionConfig(Section):
    method: Literal["exact", "rk4", "krylov"] = "exact"
    dt: float = Field(default_factory=lambda: env.DEFAULT_DT, gt=0.0)
    t_min: float = Field(0.1, gt=0.0)
    t_max: Optional[float] = Field(None, gt=0.0, description="Default 1e4 for L <= 28, else 100")
    points_per_decade: int = Field(default_factory=lambda: env.POINTS_PER_DECADE, ge=1)
    renormalize: Optional[bool] = None

    def resolved_t_max(self, L: int) -> float:
        if self.t_max is not None:
            return self.t_max
        return 1e4 if L <= 28 else 100.0


class AnalysisConfig(Section):
    cuts: Optional[List[int]] = None
    zero_entropy_tol: float = Field(default_factory=lambda: env.ZERO_ENTROPY_TOL, gt=0.0)
    unfold_degree: int = Field(default_factory=lambda: env.UNFOLD_DEGREE, ge=1)
    unfold_degrees: List[int] = Field(default_factory=lambda: [5, 6, 7, 8, 9])
    energy_window: Optional[Tuple[float, float]] = None
    spacing_bins: int = Field(40, ge=2)
    dos_bins: int = Field(51, ge=3)
    smoothing_window: int = Field(default_factory=lambda: env.SMOOTHING_WINDOW, ge=3)
    epsilons: List[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-4, 1e-6, 1e-8])
    alpha_range: Tuple[float, float] = (0.8, 1.5)
    late_window: Tuple[float, float] = (6.9e3, 1e4)
    plateau_level: float = Field(0.74, gt=0.0, description="Expected intermediate 1/z plateau")
    plateau_tol: float = Field(0.1, gt=0.0)

    @model_validator(mode="after")
    def _odd_window(self) -> "AnalysisConfig":
        if self.smoothing_window % 2 == 0:
            raise ValueError("smoothing_window must be odd")
        if self.energy_window is not None and self.energy_window[0] > self.energy_window[1]:
            raise ValueError("energy_window must be ascending")
        return self


class QuenchConfig(Section):
    initial: str = Field("psi0", description="dw, psi0, psi_plus, psi_minus or a bitstring")
    compare: List[str] = Field(default_factory=lambda: ["psi_plus", "psi_minus"])
    t_max: float = Field(20.0, gt=0.0)
    step: float = Field(0.01, gt=0.0, description="Uniform sample spacing")
    cuts: List[int] = Field(default_factory=lambda: [11])
    site: int = Field(11, ge=1, description="Site whose density is tracked")


class AutomatonConfig(Section):
    L: int = Field(298, ge=4)
    Np: int = Field(100, ge=1)
    layers: int = Field(100_000, ge=2)
    layout: GateLayout = GateLayout.CELL

    @model_validator(mode="after")
    def _fits(self) -> "AutomatonConfig":
        if self.Np > self.L:
            raise ValueError(f"Np={self.Np} exceeds L={self.L}")
        return self


class OutputConfig(Section):
    directory: str = Field(default_factory=lambda: env.OUTPUT_DIR)


class RunConfig(Section):
    """One reproducible run: everything a command needs, nothing hidden."""

    command: Optional[Command] = None
    model: ModelConfig = Field(default_factory=ModelConfig)
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    evolution: EvolutionConfig = Field(default_factory=EvolutionConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    quench: QuenchConfig = Field(default_factory=QuenchConfig)
    automaton: AutomatonConfig = Field(default_factory=AutomatonConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _geometry_within_reach(self) -> "RunConfig":
        L = self.geometry.L
        if L is not None and self.geometry.Np > L:
            raise ValueError(f"Np={self.geometry.Np} exceeds L={L}")
        return self

    def resolved_L(self, Np: Optional[int] = None) -> int:
        """Configured L, or L*_r(Np) when none is given or Np differs from geometry.Np."""
        Np = Np if Np is not None else self.geometry.Np
        if self.geometry.L is not None and Np == self.geometry.Np:
            return self.geometry.L
        return (self.model.r + 1) * Np - self.model.r


def _locate(text: str, loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the TOML key addressed by a pydantic error location."""
    keys = [str(part) for part in loc if isinstance(part, str)]
    if not keys:
        return None
    section: List[str] = []
    header_line = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        header = re.fullmatch(r"\[\s*([^\]]+?)\s*\]", line)
        if header:
            section = [part.strip() for part in header.group(1).split(".")]
            if keys[: len(section)] == section:
                header_line = number
            continue
        match = re.match(r"([A-Za-z0-9_\-\"']+)\s*=", line)
        if match and section == keys[:-1] and match.group(1).strip("\"'") == keys[-1]:
            return number
    return header_line


def _format_errors(error: ValidationError, text: str, source: str) -> str:
    messages = []
    for item in error.errors():
        loc = item.get("loc", ())
        line = _locate(text, loc)
        where = f"{source}:{line}" if line else source
        dotted = ".".join(str(part) for part in loc) or "<root>"
        messages.append(f"{where}: {dotted}: {item['msg']}")
    return "\n".join(messages)


def parse_run_config(text: str, source: str = "<config>", command: Optional[str] = None) -> RunConfig:
    """
    Parse and validate TOML text

    Args:
        text: TOML document
        source: Name used in error messages
        command: Subcommand requested on the command line

    Returns:
        RunConfig: Validated configuration
    """
    try:
        data: dict[str, Any] = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{source}: {e}") from e
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_errors(e, text, source)) from e

    if command is not None:
        if config.command is not None and config.command != command:
            line = _locate(text, ("command",))
            raise ConfigError(
                f"{source}:{line}: command: config is for '{config.command}', not '{command}'"
            )
        config = config.model_copy(update={"command": command})
    return config


def load_run_config(path: Optional[Union[str, Path]], command: Optional[str] = None) -> RunConfig:
    """Read a TOML file; no path gives the defaults."""
    if path is None:
        return parse_run_config("", source="<defaults>", command=command)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    return parse_run_config(text, source=str(path), command=command)
