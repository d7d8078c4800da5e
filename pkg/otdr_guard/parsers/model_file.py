"""Model file reader/writer.

A model file is a JSON document holding the architecture, training metadata and
every parameter tensor as base64-encoded little-endian float64 bytes with a
SHA-256 digest. Parameters are written in a fixed (sorted) order so identical
models give identical files.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from pydantic import ValidationError

from ..errors import ModelFileError, ShapeError
from ..models import AeArchitecture, DiagArchitecture, ModelMetadata
from ..networks import AeModel, DiagModel, init_ae_model, init_diag_model

FORMAT_NAME = "otdr-guard-model"
FORMAT_VERSION = 1

AnyModel = Union[AeModel, DiagModel]


def encode_tensor(name: str, array: np.ndarray) -> Dict[str, Any]:
    raw = np.ascontiguousarray(array, dtype="<f8").tobytes()
    return {
        "name": name,
        "shape": list(array.shape),
        "data": base64.b64encode(raw).decode("ascii"),
        "sha256": hashlib.sha256(raw).hexdigest(),
    }


def decode_tensor(entry: Dict[str, Any]) -> np.ndarray:
    try:
        name = entry["name"]
        shape = tuple(int(d) for d in entry["shape"])
        raw = base64.b64decode(entry["data"], validate=True)
        digest = entry["sha256"]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(f"malformed parameter entry: {e}") from e
    if hashlib.sha256(raw).hexdigest() != digest:
        raise ModelFileError(f"checksum mismatch for parameter '{name}'")
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(raw) != expected:
        raise ModelFileError(f"parameter '{name}' has {len(raw)} bytes, expected {expected}")
    array = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(array)):
        raise ModelFileError(f"parameter '{name}' contains non-finite values")
    return array


def model_to_dict(model: AnyModel) -> Dict[str, Any]:
    params = model.params.tensors()
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "architecture": model.architecture.model_dump(mode="json"),
        "metadata": model.metadata.model_dump(mode="json"),
        "parameters": [encode_tensor(name, params[name]) for name in sorted(params)],
    }


def save_model(model: AnyModel, path: Path) -> None:
    """Write ``model`` to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=1)
        f.write("\n")


def dict_to_model(data: Dict[str, Any]) -> AnyModel:
    if not isinstance(data, dict) or data.get("format") != FORMAT_NAME:
        raise ModelFileError("not an otdr-guard model file")
    if data.get("version") != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model file version {data.get('version')!r}")

    kind = data.get("kind")
    try:
        metadata = ModelMetadata(**data.get("metadata", {}))
        if kind == AeModel.kind:
            model: AnyModel = init_ae_model(AeArchitecture(**data["architecture"]), zeros=True)
        elif kind == DiagModel.kind:
            model = init_diag_model(DiagArchitecture(**data["architecture"]), zeros=True)
        else:
            raise ModelFileError(f"unknown model kind {kind!r}")
    except (KeyError, TypeError, ValidationError) as e:
        raise ModelFileError(f"invalid model header: {e}") from e

    entries = data.get("parameters")
    if not isinstance(entries, list):
        raise ModelFileError("missing parameter list")
    flat = {}
    for entry in entries:
        array = decode_tensor(entry)
        if entry["name"] in flat:
            raise ModelFileError(f"duplicate parameter '{entry['name']}'")
        flat[entry["name"]] = array

    expected = set(model.params.tensors())
    if set(flat) != expected:
        missing = sorted(expected - set(flat))
        extra = sorted(set(flat) - expected)
        raise ModelFileError(f"parameter set mismatch (missing {missing}, unexpected {extra})")
    try:
        model.params = model.params.with_tensors(flat)
    except ShapeError as e:
        raise ModelFileError(str(e)) from e
    model.metadata = metadata
    return model


def load_model(path: Path) -> AnyModel:
    """Read a model written by :func:`save_model`; any inconsistency raises ModelFileError."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelFileError(f"{path}: not valid JSON ({e})") from e
    try:
        return dict_to_model(data)
    except ModelFileError as e:
        raise ModelFileError(f"{path}: {e}") from e
