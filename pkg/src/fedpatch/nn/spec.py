"""Network architecture description and shape arithmetic.

The architecture family is fixed: stacks of 3x3/stride-1/pad-1 conv + ReLU
layers, each block closed by a 2x2/stride-2 max-pool, then global average
pooling and a single dense layer producing one sigmoid logit. Only the
input size and the block layout vary.
"""

from dataclasses import dataclass, field


class SpecError(ValueError):
    """Raised when a network description is internally inconsistent."""


@dataclass(frozen=True)
class NetworkSpec:
    """Immutable description of one network instance.

    conv_blocks is an ordered sequence of (out_channels, convs_in_block)
    pairs; each block halves the spatial side via its trailing max-pool.
    """

    input_side: int
    input_channels: int
    conv_blocks: tuple = field(default=((8, 1), (16, 1), (32, 1)))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "conv_blocks",
                           tuple((int(c), int(n)) for c, n in self.conv_blocks))
        if self.input_side < 1 or self.input_channels < 1:
            raise SpecError("input_side and input_channels must be >= 1")
        if not self.conv_blocks:
            raise SpecError("at least one conv block is required")
        for out_c, n_convs in self.conv_blocks:
            if out_c < 1 or n_convs < 1:
                raise SpecError(f"bad block ({out_c}, {n_convs})")
        side = self.input_side
        for _ in self.conv_blocks:
            if side % 2 != 0:
                raise SpecError(
                    f"input_side {self.input_side} does not survive "
                    f"{len(self.conv_blocks)} pooling stages (stuck at {side})")
            side //= 2
        if side < 1:
            raise SpecError("spatial size collapses below 1x1")

    @property
    def final_side(self) -> int:
        return self.input_side // (2 ** len(self.conv_blocks))

    @property
    def final_channels(self) -> int:
        return self.conv_blocks[-1][0]

    def layer_shapes(self):
        """Ordered (name, shape) pairs for every parameter tensor.

        Conv kernels are stored (kh, kw, in_channels, out_channels); the
        dense head maps final_channels -> 1.
        """
        shapes = []
        in_c = self.input_channels
        for b, (out_c, n_convs) in enumerate(self.conv_blocks):
            for c in range(n_convs):
                shapes.append((f"block{b}_conv{c}_kernel", (3, 3, in_c, out_c)))
                shapes.append((f"block{b}_conv{c}_bias", (out_c,)))
                in_c = out_c
        shapes.append(("head_dense_kernel", (self.final_channels, 1)))
        shapes.append(("head_dense_bias", (1,)))
        return shapes

    @property
    def n_conv_layers(self) -> int:
        return sum(n for _, n in self.conv_blocks)

    @property
    def param_count(self) -> int:
        total = 0
        for _, shape in self.layer_shapes():
            n = 1
            for d in shape:
                n *= d
            total += n
        return total
