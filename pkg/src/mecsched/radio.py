"""MU uplink channel: Shannon-Hartley rate and a power-law gain model."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ModelError, RadioParams


def db_to_watts(db: float) -> float:
    """-60 dB -> 1e-6 W (dB taken relative to 1 W)."""
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ChannelModel:
    bandwidth_hz: float = 20e6
    pathloss_exponent: float = 4.0
    reference_gain: float = 1.0  # gain at 1 m

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ModelError("bandwidth_hz must be > 0")
        if self.pathloss_exponent < 2:
            raise ModelError("pathloss_exponent must be >= 2")
        if self.reference_gain <= 0:
            raise ModelError("reference_gain must be > 0")


def channel_rate(params: RadioParams, model: ChannelModel) -> float:
    snr = params.tx_power_w * params.gain / (params.interference_w + params.noise_w)
    return model.bandwidth_hz * math.log2(1.0 + snr)


def gain_from_distance(d_m: float, model: ChannelModel) -> float:
    d = max(d_m, 1.0)  # near-field guard
    return model.reference_gain * d ** (-model.pathloss_exponent)
