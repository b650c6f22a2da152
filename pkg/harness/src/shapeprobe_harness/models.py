"""UNet variants with receptive fields 140 and 210.

4-down/4-up encoder-decoder, 32 base channels. unet210 dilates encoder
blocks 2-4 (convolutions and pools alike); strides are unchanged so both
variants share spatial bookkeeping. BatchNorm always normalizes with
per-batch statistics. ``layer_spec`` exports the encoder+bottleneck stages
for an external receptive-field check.
"""
from __future__ import annotations

from typing import Any

import torch
from torch import nn

from .errors import SpecError

ARCHITECTURES = ("unet140", "unet210")
BASE_CHANNELS = 32


class ConvBlock(nn.Module):
    def __init__(self, cin: int, cout: int, dilation: int = 1):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=dilation, dilation=dilation),
            nn.BatchNorm2d(cout, track_running_stats=False),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=dilation, dilation=dilation),
            nn.BatchNorm2d(cout, track_running_stats=False),
            nn.ReLU(inplace=True),
        )
        self.dilation = dilation

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def _pool(dilation: int) -> nn.MaxPool2d:
    if dilation == 1:
        return nn.MaxPool2d(2, stride=2)
    return nn.MaxPool2d(2, stride=2, dilation=dilation, padding=1)


class UNet(nn.Module):
    def __init__(self, arch: str, base: int = BASE_CHANNELS):
        super().__init__()
        if arch not in ARCHITECTURES:
            raise SpecError(f"unknown architecture {arch!r}; "
                            f"choose from {ARCHITECTURES}")
        self.arch = arch
        # block 1 and the bottleneck stay dense in both variants
        enc_dil = (1, 1, 1, 1) if arch == "unet140" else (1, 2, 2, 2)
        chans = [base * 2 ** i for i in range(5)]
        self.encoders = nn.ModuleList()
        self.pools = nn.ModuleList()
        cin = 3
        for c, d in zip(chans[:4], enc_dil):
            self.encoders.append(ConvBlock(cin, c, d))
            self.pools.append(_pool(d))
            cin = c
        self.bottleneck = ConvBlock(chans[3], chans[4])
        self.upsamples = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for hi, lo in zip(chans[4:0:-1], chans[3::-1]):
            self.upsamples.append(nn.ConvTranspose2d(hi, lo, 2, stride=2))
            self.decoders.append(ConvBlock(2 * lo, lo))
        self.head = nn.Conv2d(base, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        for enc, pool in zip(self.encoders, self.pools):
            x = enc(x)
            skips.append(x)
            x = pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.upsamples, self.decoders,
                                 reversed(skips)):
            x = up(x)
            x = dec(torch.cat([x, skip], dim=1))
        return self.head(x)

    def layer_spec(self) -> dict[str, Any]:
        """Encoder + bottleneck stages in the receptive-field exchange form."""
        stages = []
        for enc, pool in zip(self.encoders, self.pools):
            d = enc.dilation
            stages += [{"kernel": 3, "dilation": d, "stride": 1}] * 2
            stages.append({"kernel": 2, "dilation": d, "stride": 2})
        stages += [{"kernel": 3, "dilation": 1, "stride": 1}] * 2
        return {"stages": stages}


def make_model(arch: str) -> UNet:
    return UNet(arch)
