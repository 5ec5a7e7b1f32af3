"""State-assembly tests.

The descriptor is contractually the flattened two-line fit of the
band-filtered spectrum; tests compose those stages directly as the
reference.
"""

import math

import numpy as np
import pytest

from quadloco.gait import Action, GaitConfig, neutral_action
from quadloco.perception import (
    DESCRIPTOR_DIM,
    STATE_COLUMNS,
    STATE_DIM,
    EnvDescriptor,
    StateVector,
    assemble_state,
    build_descriptor,
    descriptor_distance,
)
from quadloco.signals import (
    SENSE_BAND,
    TimeSeries,
    band_filter,
    dominant_pair,
    fft_forward,
)

CFG = GaitConfig()
TWO_PI = 2.0 * math.pi


def stride_like_trace(n=100, rate=100.0, f=1.25, noise=0.05, seed=0):
    """Synthetic gyro channel: stride-periodic fundamental plus a weaker
    harmonic plus sensor noise."""
    t = np.arange(n) / rate
    rng = np.random.default_rng(seed)
    x = 0.8 * np.sin(TWO_PI * f * t + 0.4) + 0.3 * np.sin(TWO_PI * 2 * f * t + 1.0)
    return TimeSeries(x + rng.normal(0, noise, n), rate)


class TestBuildDescriptor:
    def test_equals_flattened_dominant_pair(self):
        rng = np.random.default_rng(1)
        for seed in range(20):
            ts = TimeSeries(rng.normal(0, 1, 128), 100.0)
            d = build_descriptor(ts, SENSE_BAND)
            fit = dominant_pair(band_filter(fft_forward(ts), SENSE_BAND), SENSE_BAND)
            expected = np.array([
                fit.term1.amplitude, fit.term2.amplitude,
                fit.term1.freq_hz, fit.term2.freq_hz,
                fit.term1.phase_rad, fit.term2.phase_rad, fit.offset,
            ])
            np.testing.assert_array_equal(d.flatten(), expected)
            assert d.degenerate == fit.degenerate

    def test_stride_periodic_trace_peaks_at_stride_rate(self):
        for f in [0.8, 1.0, 1.25, 1.6]:
            ts = stride_like_trace(f=f)
            d = build_descriptor(ts, SENSE_BAND)
            bin_width = ts.sample_rate_hz / len(ts)
            assert abs(d.freq1_hz - f) <= bin_width

    def test_zero_channel_degenerate_with_fillers(self):
        d = build_descriptor(TimeSeries(np.zeros(100), 100.0), SENSE_BAND)
        assert d.degenerate
        assert d.amp1 == 0.0 and d.amp2 == 0.0 and d.offset == 0.0
        assert d.phase1_rad == 0.0 and d.phase2_rad == 0.0
        assert SENSE_BAND.lo_hz <= d.freq1_hz <= SENSE_BAND.hi_hz
        assert SENSE_BAND.lo_hz <= d.freq2_hz <= SENSE_BAND.hi_hz
        assert d.freq1_hz != d.freq2_hz

    def test_scaling_channel_scales_amps_and_offset_only(self):
        ts = stride_like_trace(seed=3)
        doubled = TimeSeries(2.0 * ts.samples, ts.sample_rate_hz)
        d1 = build_descriptor(ts, SENSE_BAND)
        d2 = build_descriptor(doubled, SENSE_BAND)
        assert d2.amp1 == pytest.approx(2 * d1.amp1, rel=1e-12)
        assert d2.amp2 == pytest.approx(2 * d1.amp2, rel=1e-12)
        assert d2.offset == pytest.approx(2 * d1.offset, rel=1e-12, abs=1e-15)
        assert d2.freq1_hz == d1.freq1_hz
        assert d2.freq2_hz == d1.freq2_hz
        assert d2.phase1_rad == pytest.approx(d1.phase1_rad, abs=1e-12)
        assert d2.phase2_rad == pytest.approx(d1.phase2_rad, abs=1e-12)

    def test_deterministic_bit_identical(self):
        ts = stride_like_trace(seed=5)
        d1 = build_descriptor(ts, SENSE_BAND)
        d2 = build_descriptor(ts, SENSE_BAND)
        assert d1 == d2
        np.testing.assert_array_equal(d1.flatten(), d2.flatten())

    def test_amp_ordering_invariant(self):
        rng = np.random.default_rng(6)
        for seed in range(50):
            ts = TimeSeries(rng.normal(0, 1, 100), 100.0)
            d = build_descriptor(ts, SENSE_BAND)
            assert d.amp1 >= d.amp2 >= 0.0


class TestDescriptorDistance:
    def _desc(self, **over):
        base = dict(amp1=1.0, amp2=0.5, freq1_hz=1.25, freq2_hz=2.5,
                    phase1_rad=0.0, phase2_rad=0.0, offset=0.1)
        base.update(over)
        return EnvDescriptor(**base)

    def test_zero_for_identical(self):
        d = self._desc()
        assert descriptor_distance(d, d) == 0.0

    def test_matches_plain_l2_away_from_wrap(self):
        a = self._desc()
        b = self._desc(amp1=1.3, offset=-0.2, phase1_rad=0.5)
        expected = float(np.linalg.norm(a.flatten() - b.flatten()))
        assert descriptor_distance(a, b) == pytest.approx(expected, abs=1e-12)

    def test_phases_compared_on_the_circle(self):
        # pi and just-below -pi are the same angle, not 2*pi apart
        a = self._desc(phase1_rad=math.pi - 0.01)
        b = self._desc(phase1_rad=-math.pi + 0.01)
        assert descriptor_distance(a, b) == pytest.approx(0.02, abs=1e-12)

    def test_symmetric(self):
        a = self._desc(phase2_rad=3.0)
        b = self._desc(phase2_rad=-3.0, amp2=0.4)
        assert descriptor_distance(a, b) == pytest.approx(
            descriptor_distance(b, a), abs=1e-15)


class TestAssembleState:
    def _descriptors(self):
        out = []
        for seed in range(4):
            out.append(build_descriptor(stride_like_trace(seed=seed), SENSE_BAND))
        return out

    def test_length_and_order(self):
        gx, gy, gz, ay = self._descriptors()
        prev = neutral_action(CFG)
        s = assemble_state(gx, gy, gz, ay, prev)
        assert s.values.shape == (STATE_DIM,)
        assert STATE_DIM == 40
        np.testing.assert_array_equal(s.values[0:7], gx.flatten())
        np.testing.assert_array_equal(s.values[7:14], gy.flatten())
        np.testing.assert_array_equal(s.values[14:21], gz.flatten())
        np.testing.assert_array_equal(s.values[21:28], ay.flatten())
        np.testing.assert_array_equal(s.values[28:], prev.as_vector())

    def test_zero_descriptors_plus_neutral(self):
        zero = build_descriptor(TimeSeries(np.zeros(100), 100.0), SENSE_BAND)
        prev = neutral_action(CFG)
        s = assemble_state(zero, zero, zero, zero, prev)
        block = s.values[:28].reshape(4, DESCRIPTOR_DIM)
        # amplitude, phase, and offset fields are zero; the frequency
        # fields hold the in-band fillers
        np.testing.assert_array_equal(block[:, [0, 1, 4, 5, 6]], 0.0)
        assert np.all(block[:, 2] > 0) and np.all(block[:, 3] > 0)
        np.testing.assert_array_equal(s.values[28:], prev.as_vector())

    def test_order_sensitivity(self):
        gx, gy, gz, ay = self._descriptors()
        prev = neutral_action(CFG)
        a = assemble_state(gx, gy, gz, ay, prev)
        b = assemble_state(gy, gx, gz, ay, prev)
        assert not np.array_equal(a.values, b.values)

    def test_descriptor_slice_roundtrip(self):
        gx, gy, gz, ay = self._descriptors()
        s = assemble_state(gx, gy, gz, ay, neutral_action(CFG))
        np.testing.assert_array_equal(s.descriptor_slice("gyro_x"), gx.flatten())
        np.testing.assert_array_equal(s.descriptor_slice("acc_y"), ay.flatten())
        np.testing.assert_array_equal(s.prev_action_slice, neutral_action(CFG).as_vector())

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            StateVector(np.full(40, np.nan))
        with pytest.raises(ValueError, match="finite"):
            EnvDescriptor(1.0, 0.5, np.inf, 2.0, 0.0, 0.0, 0.0)

    def test_amp_order_enforced(self):
        with pytest.raises(ValueError, match="amp"):
            EnvDescriptor(0.5, 1.0, 1.0, 2.0, 0.0, 0.0, 0.0)

    def test_trace_columns_cover_state(self):
        assert len(STATE_COLUMNS) == STATE_DIM
        assert STATE_COLUMNS[0] == "gyro_x_amp1"
        assert STATE_COLUMNS[27] == "acc_y_offset"
        assert STATE_COLUMNS[28] == "prev_rho0"
        assert STATE_COLUMNS[39] == "prev_freq3"
