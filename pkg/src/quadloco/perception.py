"""State assembly: four channel descriptors plus the previous action.

Each IMU channel window collapses to a 7-number descriptor (two
strongest spectral lines plus offset). The learner's state is the
concatenation of the gyro x/y/z and forward-accelerometer descriptors
with the previously applied action, 40 numbers in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gait import Action
from .signals import (
    BandSpec,
    TimeSeries,
    TwoSinusoidFit,
    band_filter,
    dominant_pair,
    fft_forward,
    wrap_phase,
)

DESCRIPTOR_DIM = 7
STATE_DIM = 4 * DESCRIPTOR_DIM + 12

STATE_CHANNELS = ("gyro_x", "gyro_y", "gyro_z", "acc_y")
_DESCRIPTOR_FIELDS = ("amp1", "amp2", "freq1_hz", "freq2_hz", "phase1_rad", "phase2_rad", "offset")

STATE_COLUMNS = tuple(
    f"{ch}_{f}" for ch in STATE_CHANNELS for f in _DESCRIPTOR_FIELDS
) + tuple(
    f"prev_{name}{i}" for name in ("rho", "theta", "freq") for i in range(4)
)


@dataclass(frozen=True)
class EnvDescriptor:
    """Two-line spectral summary of one channel window."""

    amp1: float
    amp2: float
    freq1_hz: float
    freq2_hz: float
    phase1_rad: float
    phase2_rad: float
    offset: float
    degenerate: bool = False

    def __post_init__(self):
        vals = self.flatten()
        if not np.all(np.isfinite(vals)):
            raise ValueError("descriptor contains non-finite values")
        if not self.amp1 >= self.amp2 >= 0.0:
            raise ValueError(
                f"need amp1 >= amp2 >= 0, got amp1={self.amp1}, amp2={self.amp2}"
            )

    def flatten(self) -> np.ndarray:
        return np.array([
            self.amp1, self.amp2, self.freq1_hz, self.freq2_hz,
            self.phase1_rad, self.phase2_rad, self.offset,
        ])

    @staticmethod
    def from_fit(fit: TwoSinusoidFit) -> "EnvDescriptor":
        return EnvDescriptor(
            amp1=fit.term1.amplitude,
            amp2=fit.term2.amplitude,
            freq1_hz=fit.term1.freq_hz,
            freq2_hz=fit.term2.freq_hz,
            phase1_rad=fit.term1.phase_rad,
            phase2_rad=fit.term2.phase_rad,
            offset=fit.offset,
            degenerate=fit.degenerate,
        )


@dataclass(frozen=True)
class StateVector:
    """40 reals: gyro_x, gyro_y, gyro_z, acc_y descriptors then the
    previous action as [rho x4, theta x4, freq x4]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (STATE_DIM,):
            raise ValueError(f"state must have shape ({STATE_DIM},), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("state contains non-finite values")

    def descriptor_slice(self, channel: str) -> np.ndarray:
        i = STATE_CHANNELS.index(channel)
        return self.values[i * DESCRIPTOR_DIM:(i + 1) * DESCRIPTOR_DIM]

    @property
    def prev_action_slice(self) -> np.ndarray:
        return self.values[4 * DESCRIPTOR_DIM:]


def build_descriptor(channel: TimeSeries, band: BandSpec) -> EnvDescriptor:
    """Filter one channel window to the band and summarize it."""
    fit = dominant_pair(band_filter(fft_forward(channel), band), band)
    return EnvDescriptor.from_fit(fit)


def descriptor_distance(a: EnvDescriptor, b: EnvDescriptor) -> float:
    """Euclidean distance between two descriptors, with the phase
    components compared on the circle so a fit that lands at pi and one
    that lands at -pi read as identical rather than 2*pi apart."""
    diff = a.flatten() - b.flatten()
    diff[4] = wrap_phase(diff[4])
    diff[5] = wrap_phase(diff[5])
    return float(np.sqrt(np.dot(diff, diff)))


def assemble_state(
    gx: EnvDescriptor,
    gy: EnvDescriptor,
    gz: EnvDescriptor,
    ay: EnvDescriptor,
    prev_action: Action,
) -> StateVector:
    """Concatenate the four descriptors and the previous action."""
    return StateVector(
        np.concatenate([
            gx.flatten(), gy.flatten(), gz.flatten(), ay.flatten(),
            prev_action.as_vector(),
        ])
    )
