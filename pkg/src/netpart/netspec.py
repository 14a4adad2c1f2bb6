"""Declarative network descriptions, structural validation, and cost accounting.

A ``NetworkSpec`` is pure data: an ordered chain of layer descriptions plus an
input shape and a class count.  Everything else (output shapes, parameter
counts, FLOP estimates, partitionability) is derived from it.  Specs are
immutable and hashable, so derived quantities are cached per spec.

Array layout conventions baked into the spec contract:

* activations are channels-last, ``[N, H, W, C]`` for image data;
* the implicit flatten between spatial and dense layers is row-major over
  ``(H, W, C)``, i.e. feature ``(h, w, c)`` lands at index ``(h*W + w)*C + c``.
  Partition index maps depend on this ordering, so it is part of the contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

__all__ = [
    "SpecError",
    "Conv2D",
    "MaxPool",
    "Dense",
    "ReLU",
    "Dropout",
    "LRN",
    "SoftmaxCrossEntropy",
    "Layer",
    "NetworkSpec",
    "BlockInfo",
    "ParamClassBreakdown",
    "layer_shapes",
    "param_blocks",
    "count_params",
    "classify_params",
    "estimate_flops",
    "hidden_layers",
    "output_layer_index",
    "validate_partitionable",
    "lenet",
]


class SpecError(ValueError):
    """A network description is structurally invalid."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SpecError(msg)


@dataclass(frozen=True)
class Conv2D:
    """Valid (no padding), stride-1 convolution; one atomic unit per filter."""

    filters: int
    kernel_h: int
    kernel_w: int

    def __post_init__(self):
        _require(self.filters >= 1, "conv2d needs filters >= 1")
        _require(self.kernel_h >= 1 and self.kernel_w >= 1, "conv2d kernel dims must be >= 1")


@dataclass(frozen=True)
class MaxPool:
    """Non-overlapping max pooling; input dims must divide evenly."""

    pool_h: int
    pool_w: int

    def __post_init__(self):
        _require(self.pool_h >= 1 and self.pool_w >= 1, "maxpool dims must be >= 1")


@dataclass(frozen=True)
class Dense:
    units: int

    def __post_init__(self):
        _require(self.units >= 1, "dense needs units >= 1")


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Dropout:
    p: float

    def __post_init__(self):
        _require(0.0 <= self.p < 1.0, f"dropout p must be in [0, 1), got {self.p}")


@dataclass(frozen=True)
class LRN:
    """Cross-channel local response normalization.

    ``out[c] = in[c] / (k + alpha * sum_{c' in window(c)} in[c']^2) ** beta``
    with the window clipped at channel (block) boundaries.

    ``block_sizes`` splits the channel axis into independent parallel
    normalizations; ``None`` means one block over all channels.  Duplicating a
    normalization layer before partitioning means giving it block sizes that
    line up with the partition blocks.
    """

    depth_radius: int = 2
    k: float = 2.0
    alpha: float = 1e-4
    beta: float = 0.75
    block_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        _require(self.depth_radius >= 0, "lrn depth_radius must be >= 0")
        _require(self.beta > 0, "lrn beta must be > 0")
        _require(self.k > 0, "lrn k must be > 0")
        _require(self.alpha >= 0, "lrn alpha must be >= 0")
        if self.block_sizes is not None:
            object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
            _require(len(self.block_sizes) >= 1, "lrn block_sizes must be nonempty")
            _require(all(b >= 1 for b in self.block_sizes), "lrn block sizes must be >= 1")


@dataclass(frozen=True)
class SoftmaxCrossEntropy:
    pass


Layer = Union[Conv2D, MaxPool, Dense, ReLU, Dropout, LRN, SoftmaxCrossEntropy]


@dataclass(frozen=True)
class NetworkSpec:
    """Immutable description of a sequential network ending in a softmax head."""

    name: str
    input_shape: tuple[int, ...]
    classes: int
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        _require(self.classes >= 2, "need at least 2 classes")
        _require(len(self.input_shape) >= 1, "input shape must have at least one dim")
        _require(all(d >= 1 for d in self.input_shape), "input dims must be >= 1")
        _require(len(self.layers) >= 2, "need at least one layer plus the softmax head")
        heads = [i for i, l in enumerate(self.layers) if isinstance(l, SoftmaxCrossEntropy)]
        _require(len(heads) == 1, "exactly one softmax_xent head is required")
        _require(heads[0] == len(self.layers) - 1, "softmax_xent head must be the last layer")
        _require(
            isinstance(self.layers[-2], Dense) and self.layers[-2].units == self.classes,
            "the layer before the head must be a dense layer producing one unit per class",
        )
        layer_shapes(self)  # raises SpecError if the chain does not compose


def _shape_after(layer: Layer, shape: tuple[int, ...], index: int) -> tuple[int, ...]:
    if isinstance(layer, Conv2D):
        _require(len(shape) == 3, f"layer {index}: conv2d needs [H, W, C] input, got {shape}")
        h, w, c = shape
        oh, ow = h - layer.kernel_h + 1, w - layer.kernel_w + 1
        _require(oh >= 1 and ow >= 1, f"layer {index}: kernel larger than input {shape}")
        return (oh, ow, layer.filters)
    if isinstance(layer, MaxPool):
        _require(len(shape) == 3, f"layer {index}: maxpool needs [H, W, C] input, got {shape}")
        h, w, c = shape
        _require(
            h % layer.pool_h == 0 and w % layer.pool_w == 0,
            f"layer {index}: pooling {layer.pool_h}x{layer.pool_w} does not divide {h}x{w}",
        )
        return (h // layer.pool_h, w // layer.pool_w, c)
    if isinstance(layer, Dense):
        return (layer.units,)
    if isinstance(layer, (ReLU, Dropout)):
        return shape
    if isinstance(layer, LRN):
        channels = shape[-1]
        _require(channels >= 1, f"layer {index}: lrn needs a channel dimension")
        if layer.block_sizes is not None:
            _require(
                sum(layer.block_sizes) == channels,
                f"layer {index}: lrn block sizes {layer.block_sizes} do not sum to {channels} channels",
            )
        return shape
    if isinstance(layer, SoftmaxCrossEntropy):
        return shape
    raise SpecError(f"layer {index}: unknown layer kind {layer!r}")


@lru_cache(maxsize=None)
def layer_shapes(spec: NetworkSpec) -> tuple[tuple[int, ...], ...]:
    """Output shape after each layer (excluding the batch dimension)."""
    shapes = []
    shape = spec.input_shape
    for i, layer in enumerate(spec.layers):
        shape = _shape_after(layer, shape, i)
        shapes.append(shape)
    _require(
        shapes[-1] == (spec.classes,),
        f"head input shape {shapes[-1]} does not match {spec.classes} classes",
    )
    return tuple(shapes)


@dataclass(frozen=True)
class BlockInfo:
    """Shape metadata for one parameter block (one parameterized layer)."""

    layer_index: int
    weight_shape: tuple[int, ...]
    bias_shape: tuple[int, ...]
    fan_in: int
    fan_out: int


@lru_cache(maxsize=None)
def param_blocks(spec: NetworkSpec) -> tuple[BlockInfo, ...]:
    """Parameter blocks in layer order: conv kernels [kh, kw, Cin, F], dense [in, out]."""
    blocks = []
    shape = spec.input_shape
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv2D):
            c_in = shape[-1]
            wshape = (layer.kernel_h, layer.kernel_w, c_in, layer.filters)
            fan = layer.kernel_h * layer.kernel_w
            blocks.append(BlockInfo(i, wshape, (layer.filters,), fan * c_in, fan * layer.filters))
        elif isinstance(layer, Dense):
            n_in = math.prod(shape)
            blocks.append(BlockInfo(i, (n_in, layer.units), (layer.units,), n_in, layer.units))
        shape = _shape_after(layer, shape, i)
    return tuple(blocks)


def count_params(spec: NetworkSpec) -> int:
    """Exact parameter count (weights + biases) over all layers."""
    return sum(math.prod(b.weight_shape) + math.prod(b.bias_shape) for b in param_blocks(spec))


@dataclass(frozen=True)
class ParamClassBreakdown:
    """Parameter counts by how they scale when the network is partitioned.

    Output biases are shared by all sub-models (constant), biases and
    input/output weights shrink with the layer widths (linear), and weights
    between two hidden units shrink with the product of two widths
    (quadratic).
    """

    constant_count: int
    linear_count: int
    quadratic_count: int

    @property
    def total(self) -> int:
        return self.constant_count + self.linear_count + self.quadratic_count


def classify_params(spec: NetworkSpec) -> ParamClassBreakdown:
    blocks = param_blocks(spec)
    last = blocks[-1].layer_index
    first = blocks[0].layer_index
    constant = linear = quadratic = 0
    for b in blocks:
        weights = math.prod(b.weight_shape)
        biases = math.prod(b.bias_shape)
        if b.layer_index == last:
            constant += biases
            linear += weights  # output weights touch one hidden unit each
        else:
            linear += biases
            if b.layer_index == first:
                linear += weights  # input weights: the input side is replicated
            else:
                quadratic += weights
    return ParamClassBreakdown(constant, linear, quadratic)


def estimate_flops(spec: NetworkSpec, batch: int = 1) -> int:
    """Multiply-accumulate count of one forward pass for ``batch`` samples."""
    _require(batch >= 1, "batch must be >= 1")
    macs = 0
    shape = spec.input_shape
    for i, layer in enumerate(spec.layers):
        out = _shape_after(layer, shape, i)
        if isinstance(layer, Conv2D):
            kernel_volume = layer.kernel_h * layer.kernel_w * shape[-1]
            macs += out[0] * out[1] * kernel_volume * layer.filters
        elif isinstance(layer, Dense):
            macs += math.prod(shape) * layer.units
        shape = out
    return macs * batch


def output_layer_index(spec: NetworkSpec) -> int:
    """Layer index of the output parameter block (the dense layer into the head)."""
    return param_blocks(spec)[-1].layer_index


def hidden_layers(spec: NetworkSpec) -> tuple[tuple[int, int], ...]:
    """(layer_index, width) of every parameterized layer except the output one.

    These are the layers whose units/filters get divided among sub-models.
    """
    blocks = param_blocks(spec)
    out = []
    for b in blocks[:-1]:
        layer = spec.layers[b.layer_index]
        width = layer.filters if isinstance(layer, Conv2D) else layer.units
        out.append((b.layer_index, width))
    return tuple(out)


def _balanced_boundaries(width: int, k: int) -> list[int]:
    # cumulative block boundaries of the balanced split, remainder to the front
    base, rem = divmod(width, k)
    bounds, pos = [0], 0
    for i in range(k):
        pos += base + (1 if i < rem else 0)
        bounds.append(pos)
    return bounds


def validate_partitionable(spec: NetworkSpec | None, k: int | None = None) -> list[str]:
    """Check whether a spec can be split into sub-models; [] means ok.

    Flags normalization layers that couple channels across what would become
    different sub-models (they require duplication first), and, when ``k`` is
    given, hidden layers too narrow to give every sub-model at least one unit.
    """
    if spec is None or not getattr(spec, "layers", ()):
        return ["empty layer list"]
    violations = []
    shapes = layer_shapes(spec)
    hidden = dict(hidden_layers(spec))
    if k is not None:
        if k < 1:
            return [f"k must be >= 1, got {k}"]
        for idx, width in hidden.items():
            if width < k:
                violations.append(f"layer {idx}: width {width} < k={k}")
    for i, layer in enumerate(spec.layers):
        if not isinstance(layer, LRN):
            continue
        channels = shapes[i][-1]
        blocks = layer.block_sizes if layer.block_sizes is not None else (channels,)
        if k is None:
            if len(blocks) == 1 and channels > 1:
                violations.append(
                    f"layer {i}: lrn couples {channels} channels and requires duplication before partitioning"
                )
            continue
        # every lrn block must sit inside a single partition block of its width
        part = set(_balanced_boundaries(channels, min(k, channels)))
        pos = 0
        for b in blocks:
            lo, hi = pos, pos + b
            pos = hi
            inside = any(lo >= s and hi <= e for s, e in zip(sorted(part)[:-1], sorted(part)[1:]))
            if not inside:
                violations.append(
                    f"layer {i}: lrn block [{lo}, {hi}) crosses a partition boundary; requires duplication"
                )
    return violations


def lenet(
    conv1: int = 20,
    conv2: int = 50,
    hidden: int = 500,
    input_shape: tuple[int, ...] = (28, 28, 1),
    classes: int = 10,
    dropout_p: float = 0.5,
    name: str = "lenet",
) -> NetworkSpec:
    """LeNet-style chain: two 5x5 conv+pool stages, one dropout-regularized dense layer."""
    return NetworkSpec(
        name=name,
        input_shape=input_shape,
        classes=classes,
        layers=(
            Conv2D(conv1, 5, 5),
            ReLU(),
            MaxPool(2, 2),
            Conv2D(conv2, 5, 5),
            ReLU(),
            MaxPool(2, 2),
            Dense(hidden),
            ReLU(),
            Dropout(dropout_p),
            Dense(classes),
            SoftmaxCrossEntropy(),
        ),
    )
