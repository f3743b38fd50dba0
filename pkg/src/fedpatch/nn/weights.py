"""Model parameter container and initialization."""

from dataclasses import dataclass

import numpy as np

from .spec import NetworkSpec


class ShapeMismatchError(ValueError):
    """Tensor shapes disagree with what the network spec dictates."""


@dataclass
class ModelWeights:
    """Ordered, named parameter tensors for one network instance.

    Two ModelWeights built from the same spec are elementwise combinable;
    this is the unit exchanged by the federation protocol.
    """

    spec: NetworkSpec
    layers: dict  # name -> float32 ndarray, insertion-ordered per spec

    def __post_init__(self):
        expected = self.spec.layer_shapes()
        names = list(self.layers.keys())
        if names != [n for n, _ in expected]:
            raise ShapeMismatchError(
                f"layer names {names} do not match spec layout")
        for name, shape in expected:
            got = self.layers[name].shape
            if got != shape:
                raise ShapeMismatchError(
                    f"{name}: expected shape {shape}, got {got}")

    @property
    def total_params(self) -> int:
        return sum(t.size for t in self.layers.values())

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.spec, {k: v.copy() for k, v in self.layers.items()})

    def assert_finite(self):
        for name, t in self.layers.items():
            if not np.all(np.isfinite(t)):
                raise FloatingPointError(f"non-finite values in {name}")

    def allclose(self, other: "ModelWeights", atol=0.0, rtol=0.0) -> bool:
        return all(np.allclose(self.layers[k], other.layers[k], atol=atol, rtol=rtol)
                   for k in self.layers)

    def equal(self, other: "ModelWeights") -> bool:
        return all(np.array_equal(self.layers[k], other.layers[k])
                   for k in self.layers)


def init_weights(spec: NetworkSpec) -> ModelWeights:
    """Deterministic fan-in-scaled uniform init; biases start at zero."""
    rng = np.random.default_rng(spec.seed)
    layers = {}
    for name, shape in spec.layer_shapes():
        if name.endswith("_bias"):
            layers[name] = np.zeros(shape, dtype=np.float32)
        else:
            # fan_in = product of all dims except the output-channel dim
            fan_in = int(np.prod(shape[:-1]))
            bound = np.sqrt(1.0 / fan_in)
            layers[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return ModelWeights(spec, layers)
