"""File formats: JSON configs and beamformers, CSV result tables.

Configs are JSON objects whose keys are ``SystemConfig`` fields. A ``preset``
key ("desk" or "paper") selects the defaults; any field ending in ``_db`` is
converted from decibels to the linear field of the same stem. Complex arrays
are stored as ``{"shape": [...], "data": [[re, im], ...]}`` in row-major order.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields, replace
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from .array_model import ArrayGeometry, ConfigError, SystemConfig, db2lin, desk_config, \
    paper_config, lin2db
from .hbf import HbfOptions
from .metrics import BeamformerSet
from .receive_filter import ReceiveFilterState

PathLike = Union[str, Path]
PRESETS = {"desk": desk_config, "paper": paper_config}
DB_FIELDS = ("radar_sinr_target",)
_COMPLEX_FIELDS = ("eue_estimate", "clutter_amplitudes", "target_amplitude")


# ---------------------------------------------------------------- complex arrays

def complex_to_json(arr) -> dict:
    a = np.asarray(arr, dtype=complex)
    return {"shape": list(a.shape),
            "data": [[float(z.real), float(z.imag)] for z in a.reshape(-1)]}


def complex_from_json(obj) -> np.ndarray:
    """Inverse of ``complex_to_json``; also accepts plain (nested) real lists."""
    if isinstance(obj, dict):
        data = np.asarray(obj["data"], dtype=float).reshape(-1, 2)
        return (data[:, 0] + 1j * data[:, 1]).reshape(obj["shape"])
    return np.asarray(obj, dtype=complex)


def beamformers_to_json(bf: BeamformerSet) -> dict:
    return {"analog": complex_to_json(bf.analog),
            "digital_comm": complex_to_json(bf.digital_comm),
            "digital_i2s": complex_to_json(bf.digital_i2s)}


def beamformers_from_json(obj: dict) -> BeamformerSet:
    try:
        return BeamformerSet(complex_from_json(obj["analog"]),
                             complex_from_json(obj["digital_comm"]),
                             complex_from_json(obj["digital_i2s"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed beamformer record: {exc}") from None


def save_beamformers(path: PathLike, bf: BeamformerSet, filt: ReceiveFilterState = None) -> None:
    obj = beamformers_to_json(bf)
    if filt is not None:
        obj["receive_filter"] = complex_to_json(filt.w)
    write_json(path, obj)


def load_beamformers(path: PathLike) -> BeamformerSet:
    return beamformers_from_json(read_json(path))


# ---------------------------------------------------------------- configs

def config_to_dict(config: SystemConfig) -> dict:
    """JSON-compatible record of every field, plus dB views of dB-able fields."""
    out = {}
    for f in fields(config):
        val = getattr(config, f.name)
        if f.name == "geometry":
            out[f.name] = asdict(val)
        elif f.name in _COMPLEX_FIELDS:
            out[f.name] = None if val is None else complex_to_json(val)
        elif isinstance(val, np.ndarray):
            out[f.name] = val.tolist()
        else:
            out[f.name] = val
    for name in DB_FIELDS:
        lin = getattr(config, name)
        out[f"{name}_db"] = lin2db(lin) if lin > 0 else -math.inf
    return out


def config_from_dict(obj: dict) -> SystemConfig:
    obj = dict(obj)
    preset = obj.pop("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    known = {f.name for f in fields(SystemConfig)}
    kwargs = {}
    for key, val in obj.items():
        if key.endswith("_db"):
            stem = key[:-3]
            if stem not in DB_FIELDS:
                raise ConfigError(f"{key} has no linear counterpart")
            if stem in obj:
                # a config-as-run carries both views; the linear one is exact
                continue
            kwargs[stem] = 0.0 if val is None or val == -math.inf else db2lin(float(val))
        elif key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        elif key == "geometry":
            kwargs[key] = ArrayGeometry(**val) if isinstance(val, dict) else val
        elif key in _COMPLEX_FIELDS and val is not None:
            arr = complex_from_json(val)
            kwargs[key] = complex(arr) if key == "target_amplitude" and arr.ndim == 0 else arr
        else:
            kwargs[key] = val
    try:
        return PRESETS[preset](**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: PathLike) -> SystemConfig:
    return config_from_dict(read_json(path))


def options_from_dict(obj: dict):
    """RunOptions from a JSON object; the nested ``hbf`` object maps to HbfOptions."""
    from .runner import RunOptions  # the runner imports this module lazily

    obj = dict(obj or {})
    hbf_opts = HbfOptions(**obj.pop("hbf", {}))
    return replace(RunOptions(**obj), hbf=hbf_opts)


def experiment_from_dict(obj: dict, base_dir: PathLike = "."):
    """ExperimentSpec from a JSON sweep description.

    Keys: ``config`` (inline object or a path relative to ``base_dir``),
    ``sweep`` ({"param", "values"}), ``variants``, ``trials``, ``seed``,
    ``output_dir``, ``options``.
    """
    from .runner import ExperimentSpec

    cfg = obj.get("config", {})
    if isinstance(cfg, str):
        cfg = read_json(Path(base_dir) / cfg)
    sweep = obj["sweep"]
    kwargs = {k: obj[k] for k in ("variants", "trials", "seed", "output_dir", "trace_trial")
              if k in obj}
    return ExperimentSpec(base=config_from_dict(cfg), sweep_param=sweep["param"],
                          sweep_values=list(sweep["values"]),
                          options=options_from_dict(obj.get("options")), **kwargs)


# ---------------------------------------------------------------- JSON and CSV

def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: PathLike, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def read_json(path: PathLike):
    with open(path) as fh:
        return json.load(fh)


def _cell(val) -> str:
    if isinstance(val, (bool, np.bool_)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    return str(val)


def write_rows_csv(path: PathLike, rows: Sequence[dict]) -> None:
    """Rows as CSV; columns in order of first appearance, floats at full precision."""
    columns: List[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) if c in row else "" for c in columns])


def _parse(cell: str):
    if cell == "":
        return None
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def read_rows_csv(path: PathLike) -> List[Dict[str, object]]:
    """Inverse of ``write_rows_csv``: integers, floats and strings are restored."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse(v) for k, v in row.items() if v != ""} for row in reader]
