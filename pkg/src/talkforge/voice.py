"""Time-stretch, pitch-shift and the composite child-voice recipe.

The time-stretch core is a phase vocoder: fixed analysis hop, per-bin phase
propagation across a (possibly time-varying) synthesis hop, weighted
overlap-add resynthesis. Pitch shifting composes a polyphase resample with a
compensating stretch so duration is preserved (resample first, then stretch).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, resample_by_factor
from .errors import ValidationError

PV_FRAME = 1024
PV_HOP = 256


@dataclass(frozen=True)
class BreakpointFunction:
    """Piecewise-linear (time_s, factor) control curve.

    Times must be strictly increasing and factors strictly positive. Outside
    the breakpoint range the curve extends at the end values.
    """

    points: tuple

    def __post_init__(self):
        pts = tuple((float(t), float(f)) for t, f in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ValidationError("breakpoint function needs at least one point")
        times = [t for t, _ in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("breakpoint times must be strictly increasing")
        if any(f <= 0 or not np.isfinite(f) for _, f in pts):
            raise ValidationError("breakpoint factors must be positive and finite")
        if times[0] < 0:
            raise ValidationError("breakpoint times must be >= 0")

    def at(self, times) -> np.ndarray:
        ts = np.array([t for t, _ in self.points])
        fs = np.array([f for _, f in self.points])
        return np.interp(np.asarray(times, dtype=np.float64), ts, fs)

    def validate_for(self, duration_s: float) -> None:
        if self.points[-1][0] > duration_s + 1e-9:
            raise ValidationError("breakpoint times exceed clip duration")

    def integral(self, duration_s: float) -> float:
        """Trapezoid integral of the factor over [0, duration_s]."""
        ts = [0.0] + [t for t, _ in self.points] + [duration_s]
        ts = sorted(set(min(t, duration_s) for t in ts if t <= duration_s + 1e-12))
        vals = self.at(ts)
        return float(np.trapezoid(vals, ts))

    @classmethod
    def constant(cls, factor: float) -> "BreakpointFunction":
        return cls(((0.0, factor),))


def load_bpf(path) -> BreakpointFunction:
    """Read a two-column (time_s factor) text file."""
    pts = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            t, f = line.split()[:2]
            pts.append((float(t), float(f)))
    return BreakpointFunction(tuple(pts))


@dataclass(frozen=True)
class ChildifyParams:
    """Pitch raise (semitones) and slow-down rate for the childify recipe."""

    pitch_up_semitones: float = 4.0
    rate_factor: float = 0.92
    pitch_bpf: BreakpointFunction | None = None
    rate_bpf: BreakpointFunction | None = None

    def __post_init__(self):
        if self.pitch_up_semitones < 0 or not np.isfinite(self.pitch_up_semitones):
            raise ValidationError("pitch_up_semitones must be >= 0")
        if not (0 < self.rate_factor <= 1):
            raise ValidationError("rate_factor must be in (0, 1]")


def _as_bpf(value) -> BreakpointFunction:
    if isinstance(value, BreakpointFunction):
        return value
    return BreakpointFunction.constant(float(value))


def _pv_stretch(x: np.ndarray, rate: int, factors: np.ndarray, target_len: int) -> np.ndarray:
    """Phase-vocoder resynthesis with per-frame synthesis hops.

    ``factors[m]`` is the stretch factor for analysis frame m at hop PV_HOP.
    """
    frame, hop = PV_FRAME, PV_HOP
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(frame) / frame)
    xp = np.concatenate([x, np.zeros(frame)])
    n_frames = 1 + (len(xp) - frame) // hop
    factors = np.asarray(factors, dtype=np.float64)
    if len(factors) < n_frames:
        factors = np.concatenate([factors, np.full(n_frames - len(factors), factors[-1])])

    # synthesis frame positions: cumulative stretched analysis hops, rounded
    ideal = np.concatenate([[0.0], np.cumsum(factors[:n_frames - 1] * hop)])
    positions = np.round(ideal).astype(int)

    omega = 2.0 * np.pi * np.arange(frame // 2 + 1) / frame
    out_len = positions[-1] + frame
    out = np.zeros(out_len)
    norm = np.zeros(out_len)

    prev_spec = None
    phase = None
    for m in range(n_frames):
        seg = xp[m * hop:m * hop + frame]
        spec = np.fft.rfft(seg * win)
        if m == 0:
            phase = np.angle(spec)
        else:
            dphi = np.angle(spec) - np.angle(prev_spec) - omega * hop
            dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
            true_freq = omega + dphi / hop
            phase = phase + true_freq * (positions[m] - positions[m - 1])
        prev_spec = spec
        seg_out = np.fft.irfft(np.abs(spec) * np.exp(1j * phase), n=frame) * win
        p = positions[m]
        out[p:p + frame] += seg_out
        norm[p:p + frame] += win ** 2

    nz = norm > 1e-8
    out[nz] /= norm[nz]
    if len(out) >= target_len:
        return out[:target_len]
    return np.concatenate([out, np.zeros(target_len - len(out))])


def _frame_factors(bpf: BreakpointFunction, n_samples: int, rate: int) -> np.ndarray:
    n_frames = 1 + n_samples // PV_HOP
    centers = (np.arange(n_frames) * PV_HOP + PV_FRAME / 2) / rate
    return bpf.at(centers)


def time_stretch(clip: AudioClip, factor) -> AudioClip:
    """Change duration by ``factor`` (scalar or BPF) without changing pitch."""
    if not isinstance(factor, BreakpointFunction) and np.isscalar(factor):
        f = float(factor)
        if not np.isfinite(f) or f <= 0:
            raise ValidationError("stretch factor must be positive")
        if f == 1.0:
            return AudioClip(clip.samples.copy(), clip.sample_rate)
        bpf = BreakpointFunction.constant(f)
        target_len = int(round(len(clip) * f))
    else:
        bpf = _as_bpf(factor)
        bpf.validate_for(clip.duration_seconds)
        if all(abs(f - 1.0) < 1e-12 for _, f in bpf.points):
            return AudioClip(clip.samples.copy(), clip.sample_rate)
        target_len = int(round(bpf.integral(clip.duration_seconds) * clip.sample_rate))
    if len(clip) == 0:
        return AudioClip(np.zeros(0), clip.sample_rate)
    factors = _frame_factors(bpf, len(clip), clip.sample_rate)
    out = _pv_stretch(clip.samples, clip.sample_rate, factors, target_len)
    return AudioClip(out, clip.sample_rate)


def pitch_shift(clip: AudioClip, semitones) -> AudioClip:
    """Scale all frequencies by 2^(s/12); duration preserved within a hop."""
    if not isinstance(semitones, BreakpointFunction) and np.isscalar(semitones):
        s = float(semitones)
        if not np.isfinite(s):
            raise ValidationError("semitones must be finite")
        if s == 0.0:
            return AudioClip(clip.samples.copy(), clip.sample_rate)
        if len(clip) == 0:
            return AudioClip(np.zeros(0), clip.sample_rate)
        ratio = 2.0 ** (s / 12.0)
        shrunk = resample_by_factor(clip.samples, 1.0 / ratio)
        stretched = time_stretch(AudioClip(shrunk, clip.sample_rate), len(clip) / len(shrunk))
        out = stretched.samples
        if len(out) > len(clip):
            out = out[:len(clip)]
        elif len(out) < len(clip):
            out = np.concatenate([out, np.zeros(len(clip) - len(out))])
        return AudioClip(out, clip.sample_rate)
    return _pitch_shift_bpf(clip, _as_bpf(semitones))


def _pitch_shift_bpf(clip: AudioClip, semi_bpf: BreakpointFunction) -> AudioClip:
    """Time-varying pitch shift: variable-rate resample, then a compensating
    stretch whose control curve is remapped through the warped timeline."""
    semi_bpf.validate_for(clip.duration_seconds)
    if len(clip) == 0:
        return AudioClip(np.zeros(0), clip.sample_rate)
    rate = clip.sample_rate
    n = len(clip)
    t_in = np.arange(n) / rate
    ratio = 2.0 ** (semi_bpf.at(t_in) / 12.0)            # local frequency ratio
    # variable-rate read: output position p advances input by ratio(t) samples
    warp = np.concatenate([[0.0], np.cumsum(1.0 / ratio)])[:-1]  # input->warped time
    out_len = int(round(warp[-1] + 1.0 / ratio[-1]))
    pos = np.interp(np.arange(out_len), warp, np.arange(n))
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    shrunk = clip.samples[lo] * (1 - frac) + clip.samples[hi] * frac

    # stretch factors on the warped timeline restore original timing
    n_frames = max(1, 1 + out_len // PV_HOP)
    centers_w = (np.arange(n_frames) * PV_HOP + PV_FRAME / 2) / rate
    t_of_w = np.interp(centers_w * rate, warp, t_in)      # warped time -> input time
    factors = 2.0 ** (semi_bpf.at(t_of_w) / 12.0)
    out = _pv_stretch(shrunk, rate, factors, n)
    return AudioClip(out, rate)


def childify(adult_clip: AudioClip, params: ChildifyParams = ChildifyParams()) -> AudioClip:
    """Raise pitch then slow down: the child-like voice transformation."""
    pitched = pitch_shift(adult_clip, params.pitch_bpf if params.pitch_bpf is not None
                          else params.pitch_up_semitones)
    if params.rate_bpf is not None:
        # rate-factor curve f(t) means local output duration 1/f
        stretch = BreakpointFunction(tuple((t, 1.0 / f) for t, f in params.rate_bpf.points))
        return time_stretch(pitched, stretch)
    if params.rate_factor == 1.0:
        return pitched
    return time_stretch(pitched, 1.0 / params.rate_factor)
