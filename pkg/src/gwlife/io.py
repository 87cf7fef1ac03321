"""Model-spec parsing and canonical JSON output.

A model spec is a JSON object with keys ``offspring`` and ``lifetime``.
The offspring mean may be given as the string ``"1/l"`` to request the
exactly critical value ``m = 1/l``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping

from gwlife.distributions import (
    LifetimeModel,
    ModelSpecError,
    OffspringModel,
    make_lifetime,
    make_offspring,
)


def ext(x: float) -> dict | str:
    """Encode an extended real as ``{"finite": x}`` or ``"inf"``."""
    if math.isinf(x) and x > 0:
        return "inf"
    return {"finite": float(x)}


def parse_ext(value: Any) -> float:
    if value == "inf":
        return math.inf
    if isinstance(value, Mapping) and "finite" in value:
        return float(value["finite"])
    raise ValueError(f"not an extended real: {value!r}")


def models_from_spec(spec: Mapping[str, Any]) -> tuple[OffspringModel, LifetimeModel]:
    if not isinstance(spec, Mapping):
        raise ModelSpecError("model spec must be a JSON object")
    unknown = set(spec) - {"offspring", "lifetime", "name"}
    if unknown:
        raise ModelSpecError(f"unknown model-spec keys: {sorted(unknown)}")
    if "offspring" not in spec or "lifetime" not in spec:
        raise ModelSpecError("model spec needs both 'offspring' and 'lifetime'")
    life = make_lifetime(spec["lifetime"])
    off_spec = dict(spec["offspring"]) if isinstance(spec["offspring"], Mapping) else spec["offspring"]
    if isinstance(off_spec, dict) and off_spec.get("mean") == "1/l":
        off_spec["mean"] = 1.0 / life.mean
    return make_offspring(off_spec), life


def load_spec(path: str | Path) -> tuple[dict, OffspringModel, LifetimeModel]:
    """Read a model-spec file; raises ``ModelSpecError`` for any defect."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelSpecError(f"cannot read spec {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSpecError(f"spec {path} is not valid JSON: {exc}") from exc
    off, life = models_from_spec(raw)
    return raw, off, life


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON: insertion-ordered keys, floats with 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalar
        return dumps(obj.item(), indent, _level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)) or hasattr(obj, "tolist"):
        seq = obj.tolist() if hasattr(obj, "tolist") else obj
        if not seq:
            return "[]"
        if all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in seq):
            return "[" + ", ".join(dumps(x) for x in seq) + "]"
        items = [pad + dumps(x, indent, _level + 1) for x in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")
