"""Versioned JSON envelopes for fitted models."""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .anfis import AnfisModel
from .ann import TrainedNetwork
from .errors import ModelError
from .gpr import GprModel
from .model_zoo import FAMILIES
from .preprocess import Normalization

FORMAT_VERSION = 1

MODEL_TYPES = dict(FAMILIES, gpr=GprModel, ann=TrainedNetwork, anfis=AnfisModel)


def dumps(obj):
    """Canonical JSON: sorted keys, shortest round-trip float repr, no NaN."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def data_fingerprint(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def to_envelope(model, metadata=None):
    return {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "normalization": model.normalization.to_dict(),
        "payload": model.to_payload(),
        "metadata": dict(metadata or {}),
    }


def from_envelope(env):
    version = env.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelError("unsupported model version", f"got {version!r}, expected {FORMAT_VERSION}")
    family = env.get("family")
    if family not in MODEL_TYPES:
        raise ModelError("unknown model family", repr(family))
    norm = Normalization.from_dict(env["normalization"])
    return MODEL_TYPES[family].from_payload(env["payload"], norm)


def save_model(model, path, metadata=None):
    with open(path, "w") as fh:
        fh.write(dumps(to_envelope(model, metadata)))


def load_model(path):
    with open(path) as fh:
        try:
            env = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError("corrupt model", str(exc)) from None
    return from_envelope(env)
