"""JSON run configuration: strict schema, domain validation, echo."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .client_mdp import GameConfig
from .errors import ConfigurationError
from .estimation import SystemModel
from .game_sim import SimConfig
from .matrix_core import Matrix

MODES = ("ladder", "client", "server", "equilibrium", "simulate")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MatrixSpec(_Strict):
    rows: int = Field(gt=0)
    cols: int = Field(gt=0)
    data: list[float]


MatrixField = Union[list[list[float]], MatrixSpec]


class SystemSection(_Strict):
    A: MatrixField
    C: MatrixField
    Q: MatrixField
    R: MatrixField
    Pi0: Optional[MatrixField] = None


class ChannelSection(_Strict):
    lambda1: float
    lambda2: float


class PriceSection(_Strict):
    W0: float
    WL: float
    WH: float


class SimSection(_Strict):
    runs: int = Field(ge=1)
    seed: int = Field(ge=0, lt=2 ** 64)


class ConfigFile(_Strict):
    system: SystemSection
    channels: ChannelSection
    prices: PriceSection
    zeta: float
    horizon: int = Field(ge=1)
    sim: SimSection
    mode: Optional[Literal["ladder", "client", "server", "equilibrium", "simulate"]] = None


@dataclass(frozen=True)
class RunConfig:
    model: SystemModel
    game: GameConfig
    sim: SimConfig
    mode: Optional[str] = None

    def to_dict(self) -> dict:
        m = self.model
        return {
            "system": {"A": m.A.to_rows(), "C": m.C.to_rows(), "Q": m.Q.to_rows(),
                       "R": m.R.to_rows(), "Pi0": m.Pi0.to_rows()},
            "channels": {"lambda1": self.game.lambda1, "lambda2": self.game.lambda2},
            "prices": {"W0": self.game.W0, "WL": self.game.WL, "WH": self.game.WH},
            "zeta": self.game.zeta,
            "horizon": self.game.N,
            "sim": {"runs": self.sim.runs, "seed": self.sim.seed},
            "mode": self.mode,
        }


def _matrix(name: str, spec) -> Matrix:
    try:
        if isinstance(spec, MatrixSpec):
            return Matrix(spec.rows, spec.cols, tuple(spec.data))
        return Matrix.from_rows(spec)
    except ConfigurationError as exc:
        raise ConfigurationError(f"system.{name}: {exc}") from None


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(raw: dict) -> RunConfig:
    try:
        cf = ConfigFile.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config: {_format_validation(exc)}") from None

    s = cf.system
    mats = {name: _matrix(name, getattr(s, name)) for name in ("A", "C", "Q", "R")}
    pi0 = _matrix("Pi0", s.Pi0) if s.Pi0 is not None else None
    try:
        model = SystemModel(mats["A"], mats["C"], mats["Q"], mats["R"], pi0)
    except ConfigurationError as exc:
        raise ConfigurationError(f"system: {exc}") from None
    try:
        game = GameConfig(cf.channels.lambda1, cf.channels.lambda2, cf.prices.W0, cf.prices.WL,
                          cf.prices.WH, cf.zeta, cf.horizon)
    except ConfigurationError as exc:
        raise ConfigurationError(f"game parameters: {exc}") from None
    sim = SimConfig(runs=cf.sim.runs, seed=cf.sim.seed)
    return RunConfig(model, game, sim, cf.mode)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a JSON object")
    return parse_config(raw)
