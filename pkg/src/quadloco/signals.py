"""Stride-window spectral analysis for noisy IMU channels.

One gait stride of a single sensor channel is treated as a window. The
window is transformed to a half-spectrum, band-filtered around the
plausible stride frequencies, and summarized by its two strongest
spectral lines plus the window offset. That 7-number summary is what the
perception layer feeds to the learner.

Normalization convention: a unit-amplitude sinusoid sitting exactly on a
bin reads as amplitude 1.0 in that bin (raw DFT divided by N/2 for k>0
and by N for the DC bin). Phases are reported in the sine convention,
i.e. bins are read as ``amp * sin(2*pi*f*t + phase)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_phase(phi: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return (phi + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class TimeSeries:
    """One sensor channel sampled over one stride window."""

    samples: np.ndarray
    sample_rate_hz: float
    window_index: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size < 8:
            raise ValueError(f"window too short: {samples.size} samples, need >= 8")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        if not (np.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        """Sample times in seconds, starting at 0."""
        return np.arange(self.samples.size) / self.sample_rate_hz

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class Spectrum:
    """Non-negative half-spectrum of one window (normalized amplitudes)."""

    bins: np.ndarray
    bin_freq_hz: np.ndarray
    window_len: int

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=complex)
        freqs = np.asarray(self.bin_freq_hz, dtype=float)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "bin_freq_hz", freqs)
        expected = self.window_len // 2 + 1
        if bins.size != expected or freqs.size != expected:
            raise ValueError(
                f"half-spectrum of a length-{self.window_len} window needs "
                f"{expected} bins, got {bins.size}/{freqs.size}"
            )
        if freqs[0] != 0.0 or np.any(np.diff(freqs) <= 0):
            raise ValueError("bin_freq_hz must start at 0 and be strictly increasing")

    @property
    def sample_rate_hz(self) -> float:
        return float(self.bin_freq_hz[1] * self.window_len)


@dataclass(frozen=True)
class BandSpec:
    """Retained frequency band, in Hz."""

    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not (0.0 <= self.lo_hz < self.hi_hz):
            raise ValueError(f"need 0 <= lo < hi, got [{self.lo_hz}, {self.hi_hz}]")


# Band retained after filtering, and the prior on plausible stride rates.
SENSE_BAND = BandSpec(0.1, 10.0)
STRIDE_BAND = BandSpec(0.5, 2.0)


@dataclass(frozen=True)
class SinusoidTerm:
    """One spectral line read as amp * sin(2*pi*f*t + phase)."""

    amplitude: float
    freq_hz: float
    phase_rad: float

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValueError(f"amplitude must be finite and >= 0, got {self.amplitude}")
        if not (np.isfinite(self.freq_hz) and self.freq_hz >= 0):
            raise ValueError(f"freq_hz must be finite and >= 0, got {self.freq_hz}")
        if not (-math.pi <= self.phase_rad < math.pi):
            raise ValueError(f"phase_rad must lie in [-pi, pi), got {self.phase_rad}")


@dataclass(frozen=True)
class TwoSinusoidFit:
    """The two strongest in-band lines of a window plus its offset.

    ``degenerate`` marks fits built from fewer than two nonzero in-band
    bins (silence, a single pure tone); missing terms carry zero
    amplitude and synthetic filler frequencies so downstream state
    vectors keep their shape.
    """

    term1: SinusoidTerm
    term2: SinusoidTerm
    offset: float
    degenerate: bool = False

    def __post_init__(self):
        if self.term1.amplitude < self.term2.amplitude:
            raise ValueError("term1 must carry the larger amplitude")
        if self.term1.freq_hz == self.term2.freq_hz:
            raise ValueError("term frequencies must differ")


def fft_forward(x: TimeSeries) -> Spectrum:
    """Transform one window into its normalized half-spectrum."""
    n = x.samples.size
    raw = np.fft.rfft(x.samples)
    bins = raw / (n / 2.0)
    bins[0] = raw[0] / n
    freqs = np.arange(bins.size) * (x.sample_rate_hz / n)
    return Spectrum(bins=bins, bin_freq_hz=freqs, window_len=n)


def band_filter(s: Spectrum, band: BandSpec) -> Spectrum:
    """Zero every bin outside the band. The DC bin survives regardless:
    it carries the window offset that the fit reports."""
    keep = (s.bin_freq_hz >= band.lo_hz) & (s.bin_freq_hz <= band.hi_hz)
    keep[0] = True
    bins = np.where(keep, s.bins, 0.0 + 0.0j)
    return Spectrum(bins=bins, bin_freq_hz=s.bin_freq_hz.copy(), window_len=s.window_len)


def ifft_inverse(s: Spectrum) -> TimeSeries:
    """Return the real time signal implied by a half-spectrum.

    The full spectrum is rebuilt by Hermitian extension, so a
    half-spectrum whose DC or Nyquist bin carries an imaginary part (a
    corrupted spectrum, not one produced by :func:`fft_forward`) leaves
    a complex residue and is rejected.
    """
    n = s.window_len
    raw = s.bins * (n / 2.0)
    raw[0] = s.bins[0] * n
    full = np.zeros(n, dtype=complex)
    full[: raw.size] = raw
    if n % 2 == 0:
        full[raw.size:] = np.conj(raw[1:-1][::-1])
    else:
        full[raw.size:] = np.conj(raw[1:][::-1])
    y = np.fft.ifft(full)
    worst = float(np.max(np.abs(y.imag))) if n else 0.0
    if worst > 1e-6:
        raise ValueError(
            f"corrupted half-spectrum: implied signal has imaginary magnitude {worst:.3g}"
        )
    return TimeSeries(np.ascontiguousarray(y.real), s.sample_rate_hz)


def _term_amplitudes(s: Spectrum) -> np.ndarray:
    """Per-bin sinusoid amplitudes. The Nyquist bin of an even window is
    halved: its raw DFT value is N*amp rather than (N/2)*amp, so the
    shared normalization overstates it by 2."""
    amps = np.abs(s.bins)
    if s.window_len % 2 == 0:
        amps = amps.copy()
        amps[-1] *= 0.5
    return amps


def _filler_freqs(band: BandSpec, taken: list[float], count: int) -> list[float]:
    span = band.hi_hz - band.lo_hz
    candidates = [band.lo_hz + span * f for f in (0.5, 0.25, 0.75, 0.375, 0.625)]
    out: list[float] = []
    for c in candidates:
        if len(out) == count:
            break
        if all(c != t for t in taken) and all(c != o for o in out):
            out.append(c)
    return out


def dominant_pair(s: Spectrum, band: BandSpec) -> TwoSinusoidFit:
    """Pick the two strongest in-band lines plus the DC offset.

    Amplitude ties (within 1e-9 relative) break toward the lower
    frequency so repeated runs produce identical fits. Bins more than
    nine orders of magnitude below the strongest in-band line are
    rounding leakage, not signal, and do not count; with fewer than two
    countable lines the missing terms get zero amplitude and distinct
    filler frequencies, and the fit is flagged degenerate.
    """
    amps = _term_amplitudes(s)
    in_band = (s.bin_freq_hz >= band.lo_hz) & (s.bin_freq_hz <= band.hi_hz)
    in_band[0] = False
    band_amps = np.where(in_band, amps, 0.0)
    floor = 1e-9 * float(band_amps.max())
    candidates = np.nonzero(band_amps > floor)[0]
    if candidates.size:
        quant = np.round(band_amps[candidates] / floor)
        # primary key: quantized amplitude descending; secondary: bin
        # index ascending, which is frequency ascending
        order = candidates[np.lexsort((candidates, -quant))]
    else:
        order = candidates

    terms: list[SinusoidTerm] = []
    for k in order[:2]:
        phase = wrap_phase(math.atan2(s.bins[k].imag, s.bins[k].real) + math.pi / 2.0)
        terms.append(SinusoidTerm(float(amps[k]), float(s.bin_freq_hz[k]), phase))

    degenerate = len(terms) < 2
    if degenerate:
        fillers = _filler_freqs(band, [t.freq_hz for t in terms], 2 - len(terms))
        for f in fillers:
            terms.append(SinusoidTerm(0.0, f, 0.0))

    return TwoSinusoidFit(
        term1=terms[0],
        term2=terms[1],
        offset=float(s.bins[0].real),
        degenerate=degenerate,
    )


def evaluate_fit(fit: TwoSinusoidFit, t):
    """Evaluate the two-sinusoid model at time(s) ``t`` (seconds)."""
    tt = np.asarray(t, dtype=float)
    y = (
        fit.term1.amplitude * np.sin(TWO_PI * fit.term1.freq_hz * tt + fit.term1.phase_rad)
        + fit.term2.amplitude * np.sin(TWO_PI * fit.term2.freq_hz * tt + fit.term2.phase_rad)
        + fit.offset
    )
    if np.isscalar(t) or tt.ndim == 0:
        return float(y)
    return y


def reconstruct_series(s: Spectrum) -> list[SinusoidTerm]:
    """One sinusoid per nonzero non-DC bin; their sum plus the DC offset
    reproduces :func:`ifft_inverse` of the spectrum."""
    amps = _term_amplitudes(s)
    terms = []
    for k in range(1, s.bins.size):
        if amps[k] == 0.0:
            continue
        phase = wrap_phase(math.atan2(s.bins[k].imag, s.bins[k].real) + math.pi / 2.0)
        terms.append(SinusoidTerm(float(amps[k]), float(s.bin_freq_hz[k]), phase))
    return terms


def write_timeseries_csv(x: TimeSeries, path) -> None:
    """Write a window as two columns: t_seconds, value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_seconds", "value"])
        for t, v in zip(x.times, x.samples):
            writer.writerow([repr(float(t)), repr(float(v))])


def read_timeseries_csv(path, window_index: int = 0) -> TimeSeries:
    """Read a t_seconds,value CSV written by :func:`write_timeseries_csv`.

    The sample rate is inferred from the time column, which must be
    uniformly spaced.
    """
    times: list[float] = []
    values: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["t_seconds", "value"]:
            raise ValueError(f"{path}: expected header 't_seconds,value', got {header}")
        for i, row in enumerate(reader, start=2):
            if len(row) < 2:
                raise ValueError(f"{path}: row {i} has {len(row)} columns, need 2")
            try:
                times.append(float(row[0]))
                values.append(float(row[1]))
            except ValueError as exc:
                raise ValueError(f"{path}: row {i}: {exc}") from None
    if len(times) < 8:
        raise ValueError(f"{path}: only {len(times)} rows, need >= 8")
    dt = np.diff(times)
    if np.any(dt <= 0) or np.max(np.abs(dt - dt[0])) > 1e-6 * dt[0]:
        raise ValueError(f"{path}: time column is not uniformly spaced")
    return TimeSeries(np.asarray(values), 1.0 / float(dt[0]), window_index=window_index)
