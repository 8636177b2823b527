"""Versioned JSON model container for both model families.

One self-describing file: a format-version integer, a kind discriminator
("tagger" or "baseline"), the full configuration, vocabularies, and every
parameter tensor as (name, shape, flat float64 list). JSON's shortest-repr
float encoding round-trips doubles exactly, so load(save(m)) predicts
bit-identically to m. Keys are sorted and floats never truncated, making the
byte output a pure function of the model. Writes go to a temp file in the
target directory and rename into place, so failures never leave partial files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict

import numpy as np

from .autodiff import param
from .baseline import VARIANTS, BaselineModel
from .embed import EmbeddingTable
from .errors import ModelFormatError
from .tagger import OptimizerConfig, TaggerConfig, TaggerModel

FORMAT_VERSION = 1


def _array_entry(name: str, arr: np.ndarray) -> dict:
    if not np.isfinite(arr).all():
        raise ModelFormatError(f"parameter {name!r} contains non-finite values")
    return {
        "name": name,
        "shape": list(arr.shape),
        "values": np.asarray(arr, dtype=np.float64).reshape(-1).tolist(),
    }


def _read_array(entry, expected_name: str | None = None) -> np.ndarray:
    try:
        name, shape, values = entry["name"], entry["shape"], entry["values"]
    except (TypeError, KeyError) as exc:
        raise ModelFormatError(f"malformed parameter entry: {exc}") from exc
    if expected_name is not None and name != expected_name:
        raise ModelFormatError(f"expected parameter {expected_name!r}, found {name!r}")
    arr = np.array(values, dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise ModelFormatError(
            f"parameter {name!r}: {arr.size} values for shape {shape}"
        )
    return arr.reshape(shape)


def model_to_dict(model) -> dict:
    if isinstance(model, TaggerModel):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "tagger",
            "config": asdict(model.config),
            "emb_dim": model.emb_dim,
            "tag_vocab": list(model.tag_vocab),
            "pos_vocab": list(model.pos_vocab),
            "word_vocab": list(model.word_vocab) if model.word_vocab else None,
            "params": [
                _array_entry(name, model.params[name].data)
                for name in sorted(model.params)
            ],
        }
    if isinstance(model, BaselineModel):
        features = sorted(model.feature_index, key=model.feature_index.get)
        params = [
            _array_entry("weights", model.weights),
            _array_entry("trans", model.trans),
            _array_entry("trans_start", model.trans_start),
            _array_entry("trans_stop", model.trans_stop),
        ]
        if model.dense is not None:
            params.append(_array_entry("dense", model.dense))
        return {
            "format_version": FORMAT_VERSION,
            "kind": "baseline",
            "variant": model.variant,
            "sigma": model.sigma,
            "emb_dim": model.emb_dim,
            "tag_vocab": list(model.tag_vocab),
            "feature_names": features,
            "params": params,
        }
    raise ModelFormatError(f"cannot serialize {type(model).__name__}")


def _require(data: dict, key: str):
    if key not in data:
        raise ModelFormatError(f"missing field {key!r}")
    return data[key]


def _tagger_from_dict(data: dict, embeddings: EmbeddingTable | None) -> TaggerModel:
    raw_config = _require(data, "config")
    try:
        raw_config = dict(raw_config)
        raw_config["optimizer"] = OptimizerConfig(**raw_config["optimizer"])
        raw_config["filter_widths"] = tuple(raw_config["filter_widths"])
        config = TaggerConfig(**raw_config)
    except (TypeError, KeyError, ValueError) as exc:
        raise ModelFormatError(f"bad tagger config: {exc}") from exc
    params = {}
    for entry in _require(data, "params"):
        arr = _read_array(entry)
        params[entry["name"]] = param(arr)
    word_vocab = data.get("word_vocab")
    emb_dim = int(_require(data, "emb_dim"))
    if embeddings is not None and embeddings.dimension != emb_dim:
        raise ModelFormatError(
            f"model expects {emb_dim}-dimensional embeddings, "
            f"table has {embeddings.dimension}"
        )
    return TaggerModel(
        config=config,
        emb_dim=emb_dim,
        tag_vocab=tuple(_require(data, "tag_vocab")),
        pos_vocab=tuple(_require(data, "pos_vocab")),
        params=params,
        embeddings=embeddings or EmbeddingTable(emb_dim, {}),
        word_vocab=tuple(word_vocab) if word_vocab else None,
    )


def _baseline_from_dict(data: dict) -> BaselineModel:
    variant = _require(data, "variant")
    if variant not in VARIANTS:
        raise ModelFormatError(f"unknown baseline variant {variant!r}")
    arrays = {}
    for entry in _require(data, "params"):
        arrays[_require(entry, "name")] = _read_array(entry)
    for needed in ("weights", "trans", "trans_start", "trans_stop"):
        if needed not in arrays:
            raise ModelFormatError(f"missing parameter {needed!r}")
    emb_dim = data.get("emb_dim")
    return BaselineModel(
        variant=variant,
        sigma=float(_require(data, "sigma")),
        tag_vocab=tuple(_require(data, "tag_vocab")),
        feature_index={n: k for k, n in enumerate(_require(data, "feature_names"))},
        weights=arrays["weights"],
        trans=arrays["trans"],
        trans_start=arrays["trans_start"],
        trans_stop=arrays["trans_stop"],
        dense=arrays.get("dense"),
        emb_dim=int(emb_dim) if emb_dim is not None else None,
    )


def model_from_dict(data, embeddings: EmbeddingTable | None = None):
    if not isinstance(data, dict):
        raise ModelFormatError("model file does not hold a JSON object")
    version = _require(data, "format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format version {version} (this build reads {FORMAT_VERSION})"
        )
    kind = _require(data, "kind")
    if kind == "tagger":
        return _tagger_from_dict(data, embeddings)
    if kind == "baseline":
        return _baseline_from_dict(data)
    raise ModelFormatError(f"unknown model kind {kind!r}")


def dumps_model(model) -> str:
    return json.dumps(
        model_to_dict(model), sort_keys=True, separators=(",", ":"), allow_nan=False
    ) + "\n"


def atomic_write_text(path: str, text: str):
    """Write via a sibling temp file and rename, so a failure never leaves a
    partial file at the destination."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def save_model(model, path: str):
    atomic_write_text(path, dumps_model(model))


def load_model(path: str, embeddings: EmbeddingTable | None = None):
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
    return model_from_dict(data, embeddings)
