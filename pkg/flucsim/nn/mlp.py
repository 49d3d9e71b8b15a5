#!/usr/bin/env python

"""Feed-forward ReLU network used as the Q-function of every agent.

The network has hidden ReLU layers and a linear output layer. Besides
forward and backward passes it keeps per-neuron counts of zero
activations (PoZ) and supports two structural edits used during model
compression: splitting a hidden neuron into two children that leave
the network output unchanged, and removing a hidden neuron.

Layer indexing follows the usual convention where layer 0 is the input,
layers 1..H are hidden, and layer H+1 is the output. `weights[i - 1]`
holds w^(i) with shape (N_{i-1}, N_i).
"""

from typing import List, Optional, Sequence, Tuple
from dataclasses import dataclass
import numpy as np
from loguru import logger

from flucsim.utils.utils import ConfigurationError, StatisticError, PruneRefusedError

logger = logger.bind(name="flucsim")

# hidden layers may never shrink below this width
MIN_HIDDEN_WIDTH = 2


@dataclass
class GradientTape:
    """Partial derivatives of a scalar loss w.r.t. every MlpModel parameter.

    The layout matches the model the tape was computed from: one array
    per weight matrix and one per bias vector.
    """
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __add__(self, other: "GradientTape") -> "GradientTape":
        return GradientTape(
            weights=[i + j for (i, j) in zip(self.weights, other.weights)],
            biases=[i + j for (i, j) in zip(self.biases, other.biases)],
        )

    def scaled(self, factor: float) -> "GradientTape":
        """Return a copy with every component multiplied by factor."""
        return GradientTape(
            weights=[i * factor for i in self.weights],
            biases=[i * factor for i in self.biases],
        )

    def flat(self) -> np.ndarray:
        """Concatenate components in the same order as MlpModel.get_params."""
        parts = []
        for wgt, bias in zip(self.weights, self.biases):
            parts.append(wgt.ravel())
            parts.append(bias.ravel())
        return np.concatenate(parts)


class MlpModel:
    """Multilayer perceptron with ReLU hidden layers and a linear head.

    Parameters
    ----------
    layer_sizes: Sequence[int]
        Layer widths [N_0, N_1, ..., N_out]. Every hidden width must be
        at least 2.
    rng: np.random.Generator or None
        Generator used to draw initial weights uniformly in
        [-1/sqrt(fan_in), 1/sqrt(fan_in)]. Biases start at zero. If None
        a fresh unseeded generator is used.
    weights, biases: optional lists of arrays
        Explicit parameters. When given they are copied and checked
        against layer_sizes and no random draws are made.

    Example
    -------
    >>> model = MlpModel([12, 14, 28, 5], rng=np.random.default_rng(1))
    >>> model.forward(np.zeros(12)).shape
    (5,)
    """
    def __init__(
        self,
        layer_sizes: Sequence[int],
        rng: Optional[np.random.Generator] = None,
        weights: Optional[Sequence[np.ndarray]] = None,
        biases: Optional[Sequence[np.ndarray]] = None,
        ):

        self.layer_sizes: List[int] = [int(i) for i in layer_sizes]
        """Layer widths, input first and output last."""
        self.weights: List[np.ndarray] = []
        """w^(i) of shape (N_{i-1}, N_i) stored at index i - 1."""
        self.biases: List[np.ndarray] = []
        """Bias vector of layer i stored at index i - 1."""
        self.poz_zero: List[np.ndarray] = []
        """Per hidden neuron count of zero post-ReLU activations."""
        self.poz_total: List[np.ndarray] = []
        """Per hidden neuron count of recorded activations."""

        self._check_layer_sizes()
        self._set_parameters(rng, weights, biases)
        self.reset_poz()

    def _check_layer_sizes(self):
        if len(self.layer_sizes) < 3:
            raise ConfigurationError(
                "an MlpModel needs an input, at least one hidden and an "
                f"output layer, got layer_sizes={self.layer_sizes}")
        if any(i < 1 for i in self.layer_sizes):
            raise ConfigurationError(
                f"layer sizes must be positive, got {self.layer_sizes}")
        if any(i < MIN_HIDDEN_WIDTH for i in self.hidden_sizes):
            raise ConfigurationError(
                f"hidden layers need at least {MIN_HIDDEN_WIDTH} neurons, "
                f"got {self.hidden_sizes}")

    def _set_parameters(self, rng, weights, biases):
        shapes = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        if weights is None:
            rng = rng if rng is not None else np.random.default_rng()
            for fan_in, fan_out in shapes:
                limit = 1.0 / np.sqrt(fan_in)
                self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
                self.biases.append(np.zeros(fan_out))
            return

        if biases is None:
            biases = [np.zeros(fan_out) for (_, fan_out) in shapes]
        if len(weights) != len(shapes) or len(biases) != len(shapes):
            raise ConfigurationError(
                f"expected {len(shapes)} weight matrices and bias vectors")
        for (wgt, bias, shape) in zip(weights, biases, shapes):
            wgt = np.array(wgt, dtype=float)
            bias = np.array(bias, dtype=float).ravel()
            if wgt.shape != shape or bias.shape != (shape[1],):
                raise ConfigurationError(
                    f"parameter shapes {wgt.shape}/{bias.shape} do not "
                    f"match layer sizes {self.layer_sizes}")
            self.weights.append(wgt)
            self.biases.append(bias)

    # ----------------------------------------------------------------
    # shape helpers
    # ----------------------------------------------------------------

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def hidden_sizes(self) -> List[int]:
        return self.layer_sizes[1:-1]

    @property
    def total_hidden(self) -> int:
        """Total number of hidden neurons."""
        return int(sum(self.hidden_sizes))

    @property
    def n_params(self) -> int:
        return int(sum(i.size + j.size for (i, j) in zip(self.weights, self.biases)))

    def same_shape(self, other: "MlpModel") -> bool:
        """True if other has identical layer sizes."""
        return self.layer_sizes == other.layer_sizes

    def copy(self) -> "MlpModel":
        """Deep copy of parameters and PoZ counters."""
        new = MlpModel(
            self.layer_sizes,
            weights=[i.copy() for i in self.weights],
            biases=[i.copy() for i in self.biases],
        )
        new.poz_zero = [i.copy() for i in self.poz_zero]
        new.poz_total = [i.copy() for i in self.poz_total]
        return new

    # ----------------------------------------------------------------
    # flat parameter vector, used by federation and snapshots
    # ----------------------------------------------------------------

    def get_params(self) -> np.ndarray:
        """Return all parameters as one vector, layer by layer, W then b."""
        parts = []
        for wgt, bias in zip(self.weights, self.biases):
            parts.append(wgt.ravel())
            parts.append(bias.ravel())
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> "MlpModel":
        """Overwrite all parameters from a vector laid out as get_params."""
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size != self.n_params:
            raise ConfigurationError(
                f"parameter vector has {flat.size} values, model needs {self.n_params}")
        pos = 0
        for idx, (wgt, bias) in enumerate(zip(self.weights, self.biases)):
            self.weights[idx] = flat[pos:pos + wgt.size].reshape(wgt.shape).copy()
            pos += wgt.size
            self.biases[idx] = flat[pos:pos + bias.size].copy()
            pos += bias.size
        return self

    def load_from(self, other: "MlpModel") -> "MlpModel":
        """Copy other's parameters into this model (shapes must match)."""
        if not self.same_shape(other):
            raise ConfigurationError(
                f"cannot copy {other.layer_sizes} into {self.layer_sizes}")
        self.weights = [i.copy() for i in other.weights]
        self.biases = [i.copy() for i in other.biases]
        return self

    def blend(self, other: "MlpModel", eta: float) -> "MlpModel":
        """Set parameters to (1 - eta) * self + eta * other in place."""
        if not self.same_shape(other):
            raise ConfigurationError(
                f"cannot blend {other.layer_sizes} into {self.layer_sizes}")
        self.weights = [
            (1.0 - eta) * i + eta * j for (i, j) in zip(self.weights, other.weights)]
        self.biases = [
            (1.0 - eta) * i + eta * j for (i, j) in zip(self.biases, other.biases)]
        return self

    # ----------------------------------------------------------------
    # forward / backward
    # ----------------------------------------------------------------

    def _as_batch(self, inputs: np.ndarray) -> Tuple[np.ndarray, bool]:
        arr = np.asarray(inputs, dtype=float)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.input_dim:
            raise ConfigurationError(
                f"input of shape {np.shape(inputs)} does not match input "
                f"dimension {self.input_dim}")
        return arr, single

    def _forward_pass(self, batch: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """Return (activations, pre-activations); activations[0] is the input."""
        acts = [batch]
        zs = []
        last = len(self.weights) - 1
        for idx, (wgt, bias) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ wgt + bias
            zs.append(z)
            acts.append(z if idx == last else np.maximum(z, 0.0))
        return acts, zs

    def forward(self, inputs: np.ndarray, record_poz: bool = False) -> np.ndarray:
        """Return Q-values for one state vector or a (batch, N_0) array.

        Parameters
        ----------
        inputs: np.ndarray
            A vector of length N_0 or a 2-D batch of them.
        record_poz: bool
            If True, every hidden neuron's zero/total activation counters
            are incremented once per input row.
        """
        batch, single = self._as_batch(inputs)
        acts, _ = self._forward_pass(batch)
        if record_poz:
            for hidx in range(self.n_hidden_layers):
                hidden = acts[hidx + 1]
                self.poz_zero[hidx] += np.sum(hidden == 0.0, axis=0)
                self.poz_total[hidx] += hidden.shape[0]
        out = acts[-1]
        return out[0] if single else out

    def backward(self, inputs: np.ndarray, output_grad: np.ndarray) -> GradientTape:
        """Return the gradient tape for a loss with dL/dy = output_grad.

        Gradients are summed over the batch. The ReLU derivative at 0 is
        taken to be 0, so a neuron that was inactive on the forward pass
        passes no gradient to its incoming weights.
        """
        batch, _ = self._as_batch(inputs)
        grad = np.asarray(output_grad, dtype=float)
        if grad.ndim == 1:
            grad = grad[None, :]
        if grad.shape != (batch.shape[0], self.output_dim):
            raise ConfigurationError(
                f"output gradient of shape {np.shape(output_grad)} does not "
                f"match ({batch.shape[0]}, {self.output_dim})")

        acts, zs = self._forward_pass(batch)
        nlayers = len(self.weights)
        dweights: List[np.ndarray] = [None] * nlayers
        dbiases: List[np.ndarray] = [None] * nlayers
        delta = grad
        for idx in range(nlayers - 1, -1, -1):
            dweights[idx] = acts[idx].T @ delta
            dbiases[idx] = delta.sum(axis=0)
            if idx:
                delta = (delta @ self.weights[idx].T) * (zs[idx - 1] > 0.0)
        return GradientTape(weights=dweights, biases=dbiases)

    def sgd_step(self, tape: GradientTape, learning_rate: float) -> "MlpModel":
        """Move parameters against the gradient: theta <- theta - lr * grad."""
        if learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if learning_rate == 0:
            return self
        for idx in range(len(self.weights)):
            if tape.weights[idx].shape != self.weights[idx].shape:
                raise ConfigurationError("gradient tape does not match model shape")
            self.weights[idx] = self.weights[idx] - learning_rate * tape.weights[idx]
            self.biases[idx] = self.biases[idx] - learning_rate * tape.biases[idx]
        return self

    # ----------------------------------------------------------------
    # PoZ statistics
    # ----------------------------------------------------------------

    def reset_poz(self):
        """Start a new PoZ accumulation window."""
        self.poz_zero = [np.zeros(i, dtype=np.int64) for i in self.hidden_sizes]
        self.poz_total = [np.zeros(i, dtype=np.int64) for i in self.hidden_sizes]

    def _check_neuron(self, layer: int, neuron: int):
        if not 1 <= layer <= self.n_hidden_layers:
            raise ConfigurationError(
                f"layer {layer} is not a hidden layer (1..{self.n_hidden_layers})")
        if not 0 <= neuron < self.layer_sizes[layer]:
            raise ConfigurationError(
                f"neuron {neuron} not in layer {layer} of width {self.layer_sizes[layer]}")

    def poz(self, layer: int, neuron: int) -> float:
        """Fraction of recorded activations of a hidden neuron that were zero."""
        self._check_neuron(layer, neuron)
        total = self.poz_total[layer - 1][neuron]
        if total == 0:
            raise StatisticError(
                f"no activations recorded for neuron ({layer}, {neuron})")
        return float(self.poz_zero[layer - 1][neuron] / total)

    def poz_vector(self, layer: int) -> np.ndarray:
        """PoZ of every neuron in a hidden layer."""
        self._check_neuron(layer, 0)
        total = self.poz_total[layer - 1]
        if np.any(total == 0):
            raise StatisticError(f"empty PoZ window in layer {layer}")
        return self.poz_zero[layer - 1] / total

    # ----------------------------------------------------------------
    # structural edits
    # ----------------------------------------------------------------

    def split_neuron(
        self,
        layer: int,
        neuron: int,
        delta: float = 0.5,
        bias_mode: str = "copy",
        ) -> "MlpModel":
        """Split a hidden neuron into two children in place.

        The children take delta * w and (1 - delta) * w as incoming
        weights and both copy the parent's outgoing weights, so with
        zero biases the network output is unchanged. The new child is
        inserted directly after the parent.

        Parameters
        ----------
        layer: int
            Hidden layer index (1-based).
        neuron: int
            Index of the neuron to split within the layer.
        delta: float
            Share of the incoming weights given to the first child, in (0, 1).
        bias_mode: str
            "copy" gives both children the parent's bias; "scale" splits
            it as delta * b and (1 - delta) * b.
        """
        self._check_neuron(layer, neuron)
        if not 0.0 < delta < 1.0:
            raise ConfigurationError(f"split delta must lie in (0, 1), got {delta}")
        if bias_mode not in ("copy", "scale"):
            raise ConfigurationError(f"unknown bias_mode {bias_mode!r}")

        w_in = self.weights[layer - 1]
        parent = w_in[:, neuron].copy()
        w_in = w_in.copy()
        w_in[:, neuron] = delta * parent
        self.weights[layer - 1] = np.insert(w_in, neuron + 1, (1.0 - delta) * parent, axis=1)

        bias = self.biases[layer - 1].copy()
        pbias = bias[neuron]
        if bias_mode == "scale":
            bias[neuron] = delta * pbias
            self.biases[layer - 1] = np.insert(bias, neuron + 1, (1.0 - delta) * pbias)
        else:
            self.biases[layer - 1] = np.insert(bias, neuron + 1, pbias)

        w_out = self.weights[layer]
        self.weights[layer] = np.insert(w_out, neuron + 1, w_out[neuron], axis=0)

        hidx = layer - 1
        self.poz_zero[hidx] = np.insert(self.poz_zero[hidx], neuron + 1, self.poz_zero[hidx][neuron])
        self.poz_total[hidx] = np.insert(self.poz_total[hidx], neuron + 1, self.poz_total[hidx][neuron])
        self.layer_sizes[layer] += 1
        logger.debug(f"split neuron ({layer}, {neuron}) -> sizes {self.hidden_sizes}")
        return self

    def prune_neuron(self, layer: int, neuron: int) -> "MlpModel":
        """Remove a hidden neuron and its incoming and outgoing weights."""
        self._check_neuron(layer, neuron)
        if self.layer_sizes[layer] <= MIN_HIDDEN_WIDTH:
            raise PruneRefusedError(
                f"layer {layer} is already at the floor of {MIN_HIDDEN_WIDTH} neurons")

        self.weights[layer - 1] = np.delete(self.weights[layer - 1], neuron, axis=1)
        self.biases[layer - 1] = np.delete(self.biases[layer - 1], neuron)
        self.weights[layer] = np.delete(self.weights[layer], neuron, axis=0)
        hidx = layer - 1
        self.poz_zero[hidx] = np.delete(self.poz_zero[hidx], neuron)
        self.poz_total[hidx] = np.delete(self.poz_total[hidx], neuron)
        self.layer_sizes[layer] -= 1
        logger.debug(f"pruned neuron ({layer}, {neuron}) -> sizes {self.hidden_sizes}")
        return self

    def __repr__(self):
        return f"MlpModel({self.layer_sizes})"
