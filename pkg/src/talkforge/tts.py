"""Deterministic formant-synthesizer text-to-speech stub.

The mapping from text to sound is intentionally crude (letter classes, not
phonetics): its job is to provide seeded, reproducible speech-like audio with
controllable pitch, formant scale and speaking rate so every downstream stage
can be exercised and tested. Any real TTS can be substituted at the pipeline
level since the contract is just text + profile -> AudioClip.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import AudioClip
from .errors import ValidationError

VOWELS = "aeiou"
VOICED_CONSONANTS = set("bdgjlmnrvwyz")

# (F1, F2) resonator centers per vowel class, Hz. Folklore values; tests only
# assert harmonic structure, never these constants.
FORMANTS = {
    "a": (800.0, 1200.0),
    "e": (500.0, 1900.0),
    "i": (320.0, 2500.0),
    "o": (480.0, 900.0),
    "u": (330.0, 800.0),
}

PHONE_SECONDS = 1.0          # duration of one phone in units of 1/speaking_rate
PAUSE_SECONDS = 0.7          # pauses are shorter than phones

CHILD_F0 = (220.0, 360.0)
ADULT_F0 = (120.0, 185.0)
CHILD_FORMANT_SCALE = (1.12, 1.32)
ADULT_FORMANT_SCALE = (0.92, 1.08)
CHILD_RATE = (8.5, 11.0)
ADULT_RATE = (11.5, 14.0)


@dataclass(frozen=True)
class VoiceProfile:
    f0_base: float
    f0_jitter: float
    formant_scale: float
    speaking_rate: float
    name: str

    def __post_init__(self):
        if self.f0_base <= 0:
            raise ValidationError("f0_base must be positive")
        if self.speaking_rate <= 0:
            raise ValidationError("speaking_rate must be positive")
        if self.formant_scale <= 0:
            raise ValidationError("formant_scale must be positive")
        if self.f0_jitter < 0:
            raise ValidationError("f0_jitter must be >= 0")


@dataclass(frozen=True)
class PhoneSequence:
    phones: tuple  # of (class_name, duration_s)

    def __post_init__(self):
        if any(d <= 0 for _, d in self.phones):
            raise ValidationError("phone durations must be positive")

    @property
    def total_duration(self) -> float:
        return sum(d for _, d in self.phones)

    def __len__(self):
        return len(self.phones)


def text_to_phones(text: str, speaking_rate: float) -> PhoneSequence:
    """Letter-class mapping; runs of non-letters collapse into one pause."""
    if speaking_rate <= 0:
        raise ValidationError("speaking_rate must be positive")
    unit = PHONE_SECONDS / speaking_rate
    phones = []
    pending_pause = False
    for ch in text.lower():
        if ch in VOWELS:
            cls = f"vowel-{ch}"
        elif ch.isalpha():
            cls = "voiced" if ch in VOICED_CONSONANTS else "unvoiced"
        else:
            pending_pause = True
            continue
        if pending_pause:
            phones.append(("pause", PAUSE_SECONDS / speaking_rate))
            pending_pause = False
        phones.append((cls, unit))
    if pending_pause:
        phones.append(("pause", PAUSE_SECONDS / speaking_rate))
    return PhoneSequence(tuple(phones))


def _resonator_coeffs(center_hz, bandwidth_hz, rate):
    r = np.exp(-np.pi * bandwidth_hz / rate)
    theta = 2.0 * np.pi * center_hz / rate
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return [1.0], a


def _pulse_train(n, f0, jitter, rate, rng):
    out = np.zeros(n)
    pos = 0.0
    while pos < n:
        out[int(pos)] = 1.0
        dev = 1.0 + 0.5 * jitter * rng.uniform(-1.0, 1.0)
        pos += rate / (f0 * dev)
    return out


def _normalize_rms(seg, target):
    rms = np.sqrt(np.mean(seg ** 2)) if len(seg) else 0.0
    return seg * (target / rms) if rms > 1e-12 else seg


def synthesize(text: str, profile: VoiceProfile, sample_rate: int = 16000,
               seed: int = 0) -> AudioClip:
    """Source-filter synthesis of ``text`` in the given voice."""
    if sample_rate < 8000:
        raise ValidationError("sample_rate must be >= 8000")
    phones = text_to_phones(text, profile.speaking_rate)
    if len(phones) == 0:
        return AudioClip(np.zeros(0), sample_rate)
    rng = np.random.default_rng(seed)

    # cumulative rounding keeps total duration within one sample of the plan
    times = np.cumsum([0.0] + [d for _, d in phones.phones])
    bounds = np.round(times * sample_rate).astype(int)
    out = np.zeros(bounds[-1])

    for idx, (cls, _dur) in enumerate(phones.phones):
        start, end = bounds[idx], bounds[idx + 1]
        n = end - start
        if n <= 0:
            continue
        amp_var = rng.uniform(0.8, 1.2)
        phone_f0 = profile.f0_base * (1.0 + profile.f0_jitter * rng.uniform(-1.0, 1.0))
        if cls == "pause":
            continue
        if cls.startswith("vowel"):
            vowel = cls[-1]
            src = _pulse_train(n, phone_f0, profile.f0_jitter, sample_rate, rng)
            seg = src
            for center in FORMANTS[vowel]:
                b, a = _resonator_coeffs(center * profile.formant_scale, 110.0, sample_rate)
                seg = lfilter(b, a, seg)
            seg = _normalize_rms(seg, 0.14 * amp_var)
        elif cls == "voiced":
            src = _pulse_train(n, phone_f0, profile.f0_jitter, sample_rate, rng)
            b, a = _resonator_coeffs(280.0 * profile.formant_scale, 90.0, sample_rate)
            seg = _normalize_rms(lfilter(b, a, src), 0.10 * amp_var)
        else:  # unvoiced
            noise = rng.standard_normal(n)
            b, a = _resonator_coeffs(3400.0, 1800.0, sample_rate)
            seg = _normalize_rms(lfilter(b, a, noise), 0.05 * amp_var)
        ramp = min(int(0.010 * sample_rate), n // 2)
        if ramp > 0:
            fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
            seg[:ramp] *= fade
            seg[-ramp:] *= fade[::-1]
        out[start:end] = seg

    peak = np.max(np.abs(out)) if out.size else 0.0
    if peak > 0.9:
        out *= 0.9 / peak
    return AudioClip(out, sample_rate)


_KIND_CODE = {"child": 101, "adult": 202}


def _draw_profile(seed, kind, f0_range, fs_range, rate_range):
    rng = np.random.default_rng((int(seed), _KIND_CODE[kind]))
    return VoiceProfile(
        f0_base=float(rng.uniform(*f0_range)),
        f0_jitter=float(rng.uniform(0.025, 0.05)),
        formant_scale=float(rng.uniform(*fs_range)),
        speaking_rate=float(rng.uniform(*rate_range)),
        name=f"{kind}-{int(seed):04d}",
    )


def child_profile(seed: int) -> VoiceProfile:
    """Seeded child-like voice: f0 and formant scale above every adult draw."""
    return _draw_profile(seed, "child", CHILD_F0, CHILD_FORMANT_SCALE, CHILD_RATE)


def adult_profile(seed: int) -> VoiceProfile:
    return _draw_profile(seed, "adult", ADULT_F0, ADULT_FORMANT_SCALE, ADULT_RATE)


def load_profile(path) -> VoiceProfile:
    """Read a key=value profile file."""
    fields = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    try:
        return VoiceProfile(
            f0_base=float(fields["f0_base"]),
            f0_jitter=float(fields.get("f0_jitter", 0.01)),
            formant_scale=float(fields.get("formant_scale", 1.0)),
            speaking_rate=float(fields.get("speaking_rate", 11.0)),
            name=fields.get("name", "custom"),
        )
    except KeyError as exc:
        raise ValidationError(f"profile file missing field {exc}") from exc
