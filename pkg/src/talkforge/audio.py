"""Audio I/O, resampling, spectral analysis and feature extraction.

Everything downstream (voice transforms, the speaker encoder, articulation)
consumes the types defined here. All operations are pure functions; clips
are treated as immutable once constructed.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .errors import AudioFormatError, ValidationError

DEFAULT_FRAME_LEN = 1024
DEFAULT_HOP = 256
LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer (nominal range [-1, 1]) at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValidationError("AudioClip samples must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValidationError("AudioClip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValidationError("sample_rate must be positive")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT frames (bins x frames) plus the analysis geometry."""

    frames: np.ndarray
    frame_len: int
    hop: int
    window: str
    sample_rate: int
    num_samples: int

    def __post_init__(self):
        if self.frames.shape[0] != self.frame_len // 2 + 1:
            raise ValidationError("bins must equal frame_len/2 + 1")
        if self.hop > self.frame_len:
            raise ValidationError("hop must not exceed frame_len")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame feature rows (log-mel, optionally cepstra appended)."""

    rows: np.ndarray
    hop_seconds: float
    band_centers_hz: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duration_s: float = 0.0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2:
            raise ValidationError("feature rows must be a 2-D array")
        if rows.size and not np.all(np.isfinite(rows)):
            raise ValidationError("feature values must be finite")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class Envelope:
    """Per-frame RMS amplitudes of a clip."""

    values: np.ndarray
    hop_seconds: float
    duration_s: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.size and values.min() < 0:
            raise ValidationError("envelope values must be >= 0")

    def at_times(self, times: np.ndarray) -> np.ndarray:
        """Linearly interpolate the envelope at arbitrary times (seconds)."""
        grid = np.arange(len(self.values)) * self.hop_seconds
        if len(self.values) == 0:
            return np.zeros(len(times))
        return np.interp(times, grid, self.values)


# ---------------------------------------------------------------------------
# WAV I/O (RIFF/WAVE, PCM 16-bit mono only)

def read_wav(path) -> AudioClip:
    """Read a PCM16 mono WAV file; samples are scaled by 1/32768."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise AudioFormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise AudioFormatError(f"{path}: truncated data chunk")
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None or payload is None:
        raise AudioFormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise AudioFormatError(f"{path}: unsupported encoding {audio_format} (PCM only)")
    if channels != 1:
        raise AudioFormatError(f"{path}: {channels} channels unsupported (mono only)")
    if bits != 16:
        raise AudioFormatError(f"{path}: {bits}-bit depth unsupported (16-bit only)")

    ints = np.frombuffer(payload, dtype="<i2")
    return AudioClip(ints.astype(np.float64) / 32768.0, rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write a clip as PCM16 mono; 16 kHz clips carry a 32000 B/s byte rate."""
    samples = clip.samples
    if samples.size and not np.all(np.isfinite(samples)):
        raise ValidationError("cannot write non-finite samples")
    ints = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    block_align = 2
    byte_rate = clip.sample_rate * block_align
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, clip.sample_rate,
                                    byte_rate, block_align, 16)
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


# ---------------------------------------------------------------------------
# Resampling

def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Windowed-sinc polyphase rate conversion to ``target_rate``."""
    if target_rate <= 0:
        raise ValidationError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), target_rate)
    out = _resample_by_ratio(clip.samples, Fraction(int(target_rate), clip.sample_rate))
    return AudioClip(out, int(target_rate))


def resample_by_factor(samples: np.ndarray, factor: float) -> np.ndarray:
    """Resample so the length scales by ``factor``; rate label unchanged."""
    if factor <= 0:
        raise ValidationError("resample factor must be positive")
    ratio = Fraction(factor).limit_denominator(1000)
    return _resample_by_ratio(np.asarray(samples, dtype=np.float64), ratio,
                              target_len=int(round(len(samples) * factor)))


def _resample_by_ratio(samples, ratio: Fraction, target_len=None):
    if target_len is None:
        target_len = int(round(len(samples) * ratio))
    if len(samples) == 0:
        return np.zeros(0)
    out = resample_poly(samples, ratio.numerator, ratio.denominator)
    if len(out) > target_len:
        out = out[:target_len]
    elif len(out) < target_len:
        out = np.concatenate([out, np.zeros(target_len - len(out))])
    return out


# ---------------------------------------------------------------------------
# STFT / inverse STFT

def _window(name: str, frame_len: int) -> np.ndarray:
    if name != "hann":
        raise ValidationError(f"unknown window {name!r}")
    # periodic Hann: COLA-friendly for hop | frame_len
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(frame_len) / frame_len)


def _check_cola(win: np.ndarray, hop: int) -> None:
    # steady-state coverage: periodised sum of the squared window
    coverage = np.array([np.sum(win[off::hop] ** 2) for off in range(hop)])
    if coverage.min() < 1e-3:
        raise ValidationError("window/hop pair fails overlap-add coverage")


def stft(clip: AudioClip, frame_len: int = DEFAULT_FRAME_LEN,
         hop: int = DEFAULT_HOP, window: str = "hann") -> Spectrogram:
    """Short-time Fourier transform with a power-of-two frame length."""
    if frame_len & (frame_len - 1) or frame_len <= 0:
        raise ValidationError("frame_len must be a power of two")
    if hop > frame_len:
        raise ValidationError("hop must not exceed frame_len")
    win = _window(window, frame_len)
    _check_cola(win, hop)
    x = clip.samples
    if len(x) < frame_len:
        frames = np.zeros((frame_len // 2 + 1, 0), dtype=complex)
        return Spectrogram(frames, frame_len, hop, window, clip.sample_rate, len(x))
    n_frames = 1 + (len(x) - frame_len) // hop
    starts = np.arange(n_frames) * hop
    segs = np.lib.stride_tricks.sliding_window_view(x, frame_len)[starts]
    frames = np.fft.rfft(segs * win, axis=1).T
    return Spectrogram(frames, frame_len, hop, window, clip.sample_rate, len(x))


def istft(spec: Spectrogram) -> AudioClip:
    """Weighted overlap-add inverse; reconstructs stft input within 1e-6."""
    frame_len, hop = spec.frame_len, spec.hop
    win = _window(spec.window, frame_len)
    n_frames = spec.n_frames
    total = spec.num_samples
    if n_frames == 0:
        return AudioClip(np.zeros(total), spec.sample_rate)
    buf_len = (n_frames - 1) * hop + frame_len
    out = np.zeros(buf_len)
    norm = np.zeros(buf_len)
    segs = np.fft.irfft(spec.frames.T, n=frame_len, axis=1) * win
    for m in range(n_frames):
        start = m * hop
        out[start:start + frame_len] += segs[m]
        norm[start:start + frame_len] += win ** 2
    nz = norm > 1e-12
    out[nz] /= norm[nz]
    if buf_len < total:
        out = np.concatenate([out, np.zeros(total - buf_len)])
    return AudioClip(out[:total], spec.sample_rate)


# ---------------------------------------------------------------------------
# Log-mel features

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Return the n_mels + 2 edge frequencies of a triangular mel bank."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def _mel_filterbank(n_mels, n_fft, rate, fmin, fmax):
    edges = mel_band_edges(n_mels, fmin, fmax)
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / rate)
    bank = np.zeros((n_mels, len(fft_freqs)))
    for b in range(n_mels):
        lo, ctr, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (fft_freqs - lo) / max(ctr - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - ctr, 1e-12)
        bank[b] = np.clip(np.minimum(up, down), 0.0, None)
    return bank, edges[1:-1]


@dataclass(frozen=True)
class FeatureConfig:
    frame_len: int = DEFAULT_FRAME_LEN
    hop: int = DEFAULT_HOP
    n_mels: int = 26
    fmin: float = 0.0
    fmax: float | None = None
    n_cepstra: int = 0
    log_floor: float = LOG_FLOOR


def features(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> FeatureSequence:
    """Deterministic log-mel rows (optionally with cepstra appended)."""
    if len(clip) < config.frame_len:
        raise ValidationError("clip shorter than one analysis frame")
    spec = stft(clip, config.frame_len, config.hop)
    power = np.abs(spec.frames.T) ** 2
    fmax = config.fmax if config.fmax is not None else clip.sample_rate / 2.0
    bank, centers = _mel_filterbank(config.n_mels, config.frame_len,
                                    clip.sample_rate, config.fmin, fmax)
    mel = power @ bank.T
    logmel = np.log(np.maximum(mel, config.log_floor))
    rows = logmel
    if config.n_cepstra:
        # type-II DCT over mel bands, orthonormal
        n = config.n_mels
        k = np.arange(config.n_cepstra)[:, None]
        basis = np.cos(np.pi * k * (2 * np.arange(n) + 1) / (2 * n))
        basis *= np.sqrt(2.0 / n)
        basis[0] /= np.sqrt(2.0)
        rows = np.concatenate([logmel, logmel @ basis.T], axis=1)
    return FeatureSequence(rows, config.hop / clip.sample_rate, centers,
                           clip.duration_seconds)


def rms_envelope(clip: AudioClip, frame_len: int = DEFAULT_FRAME_LEN,
                 hop: int = DEFAULT_HOP) -> Envelope:
    """Frame-wise root-mean-square amplitude."""
    if len(clip) < frame_len:
        raise ValidationError("clip shorter than one frame")
    n_frames = 1 + (len(clip) - frame_len) // hop
    starts = np.arange(n_frames) * hop
    segs = np.lib.stride_tricks.sliding_window_view(clip.samples, frame_len)[starts]
    values = np.sqrt(np.mean(segs ** 2, axis=1))
    return Envelope(values, hop / clip.sample_rate, clip.duration_seconds)


# ---------------------------------------------------------------------------
# Plot decimation

def plot_decimate(clip: AudioClip, max_points: int = 2000):
    """Min/max-preserving decimation to at most ``max_points`` (t, a) pairs."""
    if max_points < 2:
        raise ValidationError("max_points must be >= 2")
    n = len(clip)
    t = np.arange(n) / clip.sample_rate
    if n <= max_points:
        return list(zip(t.tolist(), clip.samples.tolist()))
    n_buckets = max_points // 2
    bounds = np.linspace(0, n, n_buckets + 1).astype(int)
    points = []
    for b in range(n_buckets):
        lo, hi = bounds[b], bounds[b + 1]
        seg = clip.samples[lo:hi]
        i_min = lo + int(np.argmin(seg))
        i_max = lo + int(np.argmax(seg))
        first, second = sorted((i_min, i_max))
        points.append((t[first], clip.samples[first]))
        points.append((t[second], clip.samples[second]))
    return points


def write_plot_points(points, path) -> None:
    """Two-column text output (time_s, amplitude) for external plotting."""
    with open(path, "w") as fh:
        for ts, amp in points:
            fh.write(f"{ts:.9g} {amp:.9g}\n")


def dominant_frequency(samples: np.ndarray, rate: int) -> float:
    """Windowed-FFT peak with parabolic refinement (test/measurement aid)."""
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < 16:
        raise ValidationError("too few samples for a frequency estimate")
    win = np.hanning(len(x))
    mag = np.abs(np.fft.rfft(x * win))
    k = int(np.argmax(mag[1:])) + 1
    if 1 <= k < len(mag) - 1 and mag[k] > 0:
        a, b, c = np.log(mag[k - 1] + 1e-300), np.log(mag[k] + 1e-300), np.log(mag[k + 1] + 1e-300)
        denom = a - 2 * b + c
        delta = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
    else:
        delta = 0.0
    return (k + delta) * rate / len(x)


def sine_clip(freq: float, duration_s: float, rate: int, amplitude: float = 0.5,
              phase: float = 0.0) -> AudioClip:
    """Convenience constructor for pure-tone clips."""
    n = int(round(duration_s * rate))
    t = np.arange(n) / rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t + phase), rate)
