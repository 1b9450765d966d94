"""
The feed-forward stylisation network.

Layer spec (reflection padding throughout):
  Conv(3->32, 9x9, s1)+IN, Conv(32->64, 3x3, s2)+IN, Conv(64->128, 3x3, s2)+IN
    -- no activation after these three
  2 x Residual(128): Conv+IN+ReLU, Conv+IN, additive skip
  Upsample x2 + Conv(128->64, 3x3)+IN+ReLU
  Upsample x2 + Conv(64->32, 3x3)+IN+ReLU
  Conv(32->3, 9x9, s1), linear
"""

from typing import List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

ARCHITECTURE_VERSION = "v1"


class ConvLayer(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1):
        super().__init__()
        self.pad = nn.ReflectionPad2d(kernel_size // 2)
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size, stride)

    def forward(self, x):
        return self.conv(self.pad(x))


class UpsampleConvLayer(nn.Module):
    """Nearest-neighbour x2 upsample followed by a stride-1 convolution."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, scale: int = 2):
        super().__init__()
        self.scale = scale
        self.conv = ConvLayer(in_channels, out_channels, kernel_size, 1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=self.scale, mode="nearest"))


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = ConvLayer(channels, channels, 3)
        self.in1 = nn.InstanceNorm2d(channels, affine=True)
        self.conv2 = ConvLayer(channels, channels, 3)
        self.in2 = nn.InstanceNorm2d(channels, affine=True)

    def forward(self, x):
        out = torch.relu(self.in1(self.conv1(x)))
        out = self.in2(self.conv2(out))
        return out + x


class StyleModel(nn.Module):
    # spatial size must be divisible by this
    STRIDE = 4

    def __init__(self):
        super().__init__()
        self.conv1 = ConvLayer(3, 32, 9, 1)
        self.in1 = nn.InstanceNorm2d(32, affine=True)
        self.conv2 = ConvLayer(32, 64, 3, 2)
        self.in2 = nn.InstanceNorm2d(64, affine=True)
        self.conv3 = ConvLayer(64, 128, 3, 2)
        self.in3 = nn.InstanceNorm2d(128, affine=True)

        self.res1 = ResidualBlock(128)
        self.res2 = ResidualBlock(128)

        self.deconv1 = UpsampleConvLayer(128, 64, 3)
        self.in4 = nn.InstanceNorm2d(64, affine=True)
        self.deconv2 = UpsampleConvLayer(64, 32, 3)
        self.in5 = nn.InstanceNorm2d(32, affine=True)
        self.deconv3 = ConvLayer(32, 3, 9, 1)

    def forward(self, x):
        y = self.in1(self.conv1(x))
        y = self.in2(self.conv2(y))
        y = self.in3(self.conv3(y))
        y = self.res2(self.res1(y))
        y = torch.relu(self.in4(self.deconv1(y)))
        y = torch.relu(self.in5(self.deconv2(y)))
        return self.deconv3(y)

    @property
    def residual_blocks(self) -> List[ResidualBlock]:
        return [m for m in self.modules() if isinstance(m, ResidualBlock)]


def layer_spec() -> List[Tuple[str, int, int, int, bool]]:
    """(kind, in, out, kernel, has_instance_norm) for every convolution, in order."""
    return [
        ("conv", 3, 32, 9, True),
        ("conv", 32, 64, 3, True),
        ("conv", 64, 128, 3, True),
        ("res", 128, 128, 3, True), ("res", 128, 128, 3, True),
        ("res", 128, 128, 3, True), ("res", 128, 128, 3, True),
        ("deconv", 128, 64, 3, True),
        ("deconv", 64, 32, 3, True),
        ("conv", 32, 3, 9, False),
    ]


def expected_parameter_count() -> int:
    """conv: in*out*k*k + out, instance norm affine: 2*out."""
    total = 0
    for _, c_in, c_out, k, has_norm in layer_spec():
        total += c_in * c_out * k * k + c_out
        if has_norm:
            total += 2 * c_out
    return total


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def build_network(seed: int) -> StyleModel:
    """Fresh model; fan-in scaled uniform convs, IN affine at (1, 0)."""
    model = StyleModel()
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.Conv2d):
                fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                bound = 1.0 / fan_in ** 0.5
                module.weight.uniform_(-bound, bound, generator=generator)
                module.bias.uniform_(-bound, bound, generator=generator)
            elif isinstance(module, nn.InstanceNorm2d):
                module.weight.fill_(1.0)
                module.bias.zero_()
    return model


def parameter_vector(model: nn.Module) -> torch.Tensor:
    return torch.cat([p.detach().reshape(-1).cpu() for p in model.parameters()])
