#!/usr/bin/env python

"""Text snapshot format for MlpModel parameters.

The file starts with a version tag, then the layer sizes, then one
line per weight matrix and bias vector, row-major, each value written
with 17 significant digits so a round trip is exact::

    # flucsim-mlp 1
    layer_sizes 12 14 28 5
    w1 ...
    b1 ...
    w2 ...
"""

from pathlib import Path
from typing import Union
import numpy as np
from loguru import logger

from flucsim.nn.mlp import MlpModel
from flucsim.utils.utils import ConfigurationError

logger = logger.bind(name="flucsim")

SNAPSHOT_TAG = "# flucsim-mlp"
SNAPSHOT_VERSION = 1


def _format(values: np.ndarray) -> str:
    return " ".join(f"{i:.17g}" for i in np.asarray(values, dtype=float).ravel())


def snapshot_string(model: MlpModel) -> str:
    """Return the snapshot text of a model."""
    lines = [
        f"{SNAPSHOT_TAG} {SNAPSHOT_VERSION}",
        "layer_sizes " + " ".join(str(i) for i in model.layer_sizes),
    ]
    for idx, (wgt, bias) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"w{idx + 1} {_format(wgt)}".rstrip())
        lines.append(f"b{idx + 1} {_format(bias)}".rstrip())
    return "\n".join(lines) + "\n"


def write_snapshot(model: MlpModel, path: Union[str, Path]) -> Path:
    """Write a model snapshot to path, creating parent dirs."""
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(snapshot_string(model), encoding="utf-8")
    logger.debug(f"wrote model {model.layer_sizes} to {path}")
    return path


def parse_snapshot(text: str) -> MlpModel:
    """Build an MlpModel from snapshot text."""
    lines = [i.strip() for i in text.strip().splitlines() if i.strip()]
    if not lines or not lines[0].startswith(SNAPSHOT_TAG):
        raise ConfigurationError("not a flucsim model snapshot")
    try:
        version = int(lines[0][len(SNAPSHOT_TAG):])
    except ValueError as err:
        raise ConfigurationError(f"bad snapshot header: {lines[0]!r}") from err
    if version != SNAPSHOT_VERSION:
        raise ConfigurationError(
            f"snapshot version {version} is not supported (expected {SNAPSHOT_VERSION})")
    if len(lines) < 2:
        raise ConfigurationError("snapshot is missing the layer_sizes line")

    key, *sizes = lines[1].split()
    if key != "layer_sizes":
        raise ConfigurationError("snapshot is missing the layer_sizes line")
    try:
        sizes = [int(i) for i in sizes]
    except ValueError as err:
        raise ConfigurationError(f"bad layer_sizes line: {lines[1]!r}") from err
    nlayers = len(sizes) - 1
    if len(lines) != 2 + 2 * nlayers:
        raise ConfigurationError(
            f"snapshot has {len(lines) - 2} parameter lines, expected {2 * nlayers}")

    weights, biases = [], []
    for idx in range(nlayers):
        wkey, *wvals = lines[2 + 2 * idx].split()
        bkey, *bvals = lines[3 + 2 * idx].split()
        if wkey != f"w{idx + 1}" or bkey != f"b{idx + 1}":
            raise ConfigurationError(f"unexpected parameter labels {wkey}, {bkey}")
        shape = (sizes[idx], sizes[idx + 1])
        try:
            wgt = np.array(wvals, dtype=float)
            bias = np.array(bvals, dtype=float)
        except ValueError as err:
            raise ConfigurationError(f"non-numeric values in layer {idx + 1}") from err
        if wgt.size != shape[0] * shape[1]:
            raise ConfigurationError(f"w{idx + 1} has {wgt.size} values, expected {shape}")
        weights.append(wgt.reshape(shape))
        biases.append(bias)
    return MlpModel(sizes, weights=weights, biases=biases)


def read_snapshot(path: Union[str, Path]) -> MlpModel:
    """Load a model snapshot written by write_snapshot."""
    path = Path(path).expanduser()
    if not path.exists():
        raise ConfigurationError(f"model snapshot {path} does not exist")
    return parse_snapshot(path.read_text(encoding="utf-8"))
