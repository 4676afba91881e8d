import json
import math
import pathlib
from typing import Any, Dict, Optional

from pydantic import BaseModel, ValidationError

from errors import ConfigError
from levy_model import LevyModel

# A model config file is the JSON form of LevyModel
ModelConfig = LevyModel


def load_model_config(path) -> LevyModel:
    path = pathlib.Path(path)
    try:
        raw = path.read_text(encoding = "utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read model config {path}: {e.strerror or e}") from e
    try:
        return ModelConfig.model_validate_json(raw)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid model config {path}: {problems}") from e


def to_json_text(data: Any) -> str:
    """json.dumps layout, with finite floats written to 17 significant digits."""
    if isinstance(data, float) and math.isfinite(data):
        text = f"{data:.17g}"
        return text if any(ch in text for ch in ".e") else text + ".0"
    if isinstance(data, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json_text(v)}" for k, v in data.items()) + "}"
    if isinstance(data, (list, tuple)):
        return "[" + ", ".join(to_json_text(v) for v in data) + "]"
    return json.dumps(data)


class EvalRecord(BaseModel):
    quantity: str
    inputs: Dict[str, float]
    value: float
    backend: Optional[str] = None

    def to_json(self) -> str:
        return to_json_text(self.model_dump())


class VerifyReport(BaseModel):
    target: str
    inputs: Dict[str, float]
    formula_value: float
    mc_mean: float
    mc_stderr: float
    z_score: Optional[float]
    passed: bool
    bias_note: str
    n_paths: int
    seed: int

    def to_json(self) -> str:
        data = self.model_dump()
        data["pass"] = data.pop("passed")
        return to_json_text(data)
