"""Python front end for the selfcf engine.

Every function takes the same inputs as the command-line tool: an optional
JSON config file, ``key=value`` overrides and an output directory.
"""

from __future__ import annotations

import csv
import io
import json
from os import PathLike
from typing import Iterable, Optional, Union

from . import _selfcf
from ._selfcf import ConfigError, Error, count_parameters, ndcg_at_k, recall_at_k, top_k

__version__ = _selfcf.__version__

PathArg = Optional[Union[str, PathLike]]

__all__ = [
    "ConfigError",
    "Error",
    "ablate",
    "config_hash",
    "count_parameters",
    "default_config",
    "evaluate",
    "ndcg_at_k",
    "prepare",
    "recall_at_k",
    "resolve_config",
    "sweep",
    "top_k",
    "train",
]


def _overrides(overrides: Optional[dict], seed: Optional[int]) -> list[str]:
    items = [f"{k}={json.dumps(v) if not isinstance(v, str) else v}" for k, v in (overrides or {}).items()]
    if seed is not None:
        items.append(f"seed={seed}")
    return items


def _run(command: str, out: PathArg, config: PathArg, overrides: Optional[dict], seed: Optional[int]):
    text, log = _selfcf.run(command, config, _overrides(overrides, seed), out)
    return json.loads(text), log


def default_config() -> dict:
    return json.loads(_selfcf.default_config())


def resolve_config(config: PathArg = None, overrides: Optional[dict] = None, seed: Optional[int] = None) -> dict:
    """Merged and validated config tree."""
    return json.loads(_selfcf.resolve_config(config, _overrides(overrides, seed)))


def config_hash(tree: dict) -> str:
    return _selfcf.config_hash(json.dumps(tree))


def prepare(out: PathArg, config: PathArg = None, overrides: Optional[dict] = None) -> dict:
    return _run("prepare", out, config, overrides, None)[0]


def train(out: PathArg, config: PathArg = None, overrides: Optional[dict] = None,
          seed: Optional[int] = None) -> dict:
    """Trains, writes the run directory and returns the test report."""
    return _run("train", out, config, overrides, seed)[0]


def evaluate(out: PathArg, config: PathArg = None, overrides: Optional[dict] = None,
             seed: Optional[int] = None) -> dict:
    return _run("evaluate", out, config, overrides, seed)[0]


def ablate(out: PathArg, config: PathArg = None, overrides: Optional[dict] = None,
           seed: Optional[int] = None) -> list[dict]:
    return _run("ablate", out, config, overrides, seed)[0]


def sweep(axis: str, values: Union[str, Iterable[float]], out: PathArg, config: PathArg = None,
          overrides: Optional[dict] = None, seed: Optional[int] = None) -> list[dict]:
    """Rows of sweep.csv as dicts. ``values`` is a list or "start:stop:step"."""
    spec = values if isinstance(values, str) else ",".join(repr(float(v)) for v in values)
    text, _ = _selfcf.sweep(axis, spec, config, _overrides(overrides, seed), out)
    return list(csv.DictReader(io.StringIO(text)))
