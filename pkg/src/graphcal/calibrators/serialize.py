"""JSON form of fitted calibrators.

Parameter values are stored as hexadecimal float strings (``float.hex``) so a
save/load round trip reproduces every 64-bit value exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..data import FORMAT_VERSION, atomic_write_text, dump_json
from ..errors import InputError
from .base import Calibrator, CalibratorConfig


def _hex_nested(a: np.ndarray):
    if a.ndim == 0:
        return float(a).hex()
    return [_hex_nested(x) for x in a]


def calibrator_to_json(c: Calibrator) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "method": c.method,
        "config": c.config.to_dict(),
        "num_classes": c.num_classes,
        "seed": c.seed,
        "params": {name: {"shape": list(v.shape), "values": _hex_nested(np.asarray(v, dtype=np.float64))}
                   for name, v in c.params.items()},
    }


def calibrator_from_json(d: dict) -> Calibrator:
    try:
        if d.get("format_version") != FORMAT_VERSION:
            raise InputError(f"unsupported calibrator format_version {d.get('format_version')!r}")
        config = CalibratorConfig.from_dict(d["config"])
        params = {}
        for name, entry in d["params"].items():
            flat = np.array([float.fromhex(x) for x in np.asarray(entry["values"], dtype=object).ravel()],
                            dtype=np.float64)
            params[name] = flat.reshape(entry["shape"])
        return Calibrator(config, params, int(d["num_classes"]), int(d["seed"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid calibrator document: {exc}") from None


def save_calibrator(path: str | Path, c: Calibrator) -> None:
    atomic_write_text(path, dump_json(calibrator_to_json(c)))


def load_calibrator(path: str | Path) -> Calibrator:
    try:
        with open(path, encoding="utf-8") as fh:
            return calibrator_from_json(json.load(fh))
    except FileNotFoundError:
        raise InputError(f"calibrator file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
