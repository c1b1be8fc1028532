"""Generation manifests: schema validation, defaults, job planning."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .toydata import stable_seed

OUTPUT_ROOT_ENV = "FORGE_OUTPUT_ROOT"

DEFAULT_SENTENCE = "It's raining so we will plan some other day"

DEFAULTS = {
    "fps": 25.0,
    "sample_rate": 16000,
    "frame_size": [256, 256],
    "global_seed": 0,
    "blinks": {"enabled": True, "min_gap_s": 2.0, "max_gap_s": 6.0, "blink_dur_s": 0.3},
    "pose": {"type": "none"},
    "animator": {"type": "procedural"},
    "quality_thresholds": {"identity_min": 0.80, "lip_sync_min": 0.80,
                           "histogram_nonzero_frac": 0.90},
}


@dataclass(frozen=True)
class SubjectSpec:
    id: str
    face: dict        # {"type": "generated"} or {"type": "files", "image": ..., "landmarks": ...}
    voice: dict       # {"profile": "child"|"adult"|{...}, "childify": None|{...}}


@dataclass(frozen=True)
class GenerationManifest:
    subjects: tuple
    sentences: tuple
    fps: float
    sample_rate: int
    frame_size: tuple
    global_seed: int
    output_dir: Path
    blinks: dict
    pose: dict
    animator: dict
    quality_thresholds: dict
    base_dir: Path

    def to_jsonable(self) -> dict:
        return {
            "subjects": [{"id": s.id, "face": s.face, "voice": s.voice}
                         for s in self.subjects],
            "sentences": list(self.sentences),
            "fps": self.fps,
            "sample_rate": self.sample_rate,
            "frame_size": list(self.frame_size),
            "global_seed": self.global_seed,
            "output_dir": str(self.output_dir),
            "blinks": self.blinks,
            "pose": self.pose,
            "animator": self.animator,
            "quality_thresholds": self.quality_thresholds,
        }


@dataclass(frozen=True)
class Job:
    subject_id: str
    sentence_index: int
    seed: int


@dataclass
class JobResult:
    job: Job
    status: str                 # "ok" or "failed"
    clip_dir: str = ""
    quality_pass: bool | None = None
    error: str = ""
    traceback: str = ""
    seconds: float = 0.0


def _require(cond, path, message):
    if not cond:
        raise ValidationError(f"{path}: {message}")


def _build_manifest(raw: dict, base_dir: Path) -> GenerationManifest:
    if not isinstance(raw, dict):
        raise ValidationError("manifest root must be a JSON object")

    merged = {**DEFAULTS, **raw}
    for key in ("blinks", "pose", "animator", "quality_thresholds"):
        merged[key] = {**DEFAULTS[key], **(raw.get(key) or {})}

    subjects_raw = merged.get("subjects")
    _require(isinstance(subjects_raw, list) and subjects_raw, "subjects",
             "need at least one subject")
    sentences = merged.get("sentences")
    _require(isinstance(sentences, list) and sentences, "sentences",
             "need at least one sentence")
    for i, s in enumerate(sentences):
        _require(isinstance(s, str) and s.strip(), f"sentences[{i}]",
                 "sentence must be a non-empty string")

    sample_rate = merged["sample_rate"]
    _require(isinstance(sample_rate, int) and sample_rate >= 8000, "sample_rate",
             f"must be an integer >= 8000, got {sample_rate!r}")
    fps = float(merged["fps"])
    _require(fps > 0, "fps", "must be positive")
    frame_size = merged["frame_size"]
    _require(isinstance(frame_size, (list, tuple)) and len(frame_size) == 2
             and all(isinstance(v, int) and v >= 128 for v in frame_size),
             "frame_size", "must be [height, width] with both >= 128")

    subjects = []
    seen = set()
    for i, s in enumerate(subjects_raw):
        path = f"subjects[{i}]"
        _require(isinstance(s, dict), path, "subject must be an object")
        sid = s.get("id")
        _require(isinstance(sid, str) and sid, f"{path}.id", "subject needs an id")
        if sid in seen:
            raise ValidationError(f"{path}.id: duplicate subject id {sid!r}")
        seen.add(sid)
        face = dict(s.get("face") or {"type": "generated"})
        kind = face.get("type", "generated")
        _require(kind in ("generated", "files"), f"{path}.face.type",
                 f"unknown face source {kind!r}")
        if kind == "files":
            for k in ("image", "landmarks"):
                _require(isinstance(face.get(k), str), f"{path}.face.{k}",
                         "file-based faces need image and landmarks paths")
        face["type"] = kind
        voice = dict(s.get("voice") or {})
        profile = voice.get("profile", "child")
        if isinstance(profile, str):
            _require(profile in ("child", "adult"), f"{path}.voice.profile",
                     f"profile must be child, adult or an object, got {profile!r}")
        else:
            _require(isinstance(profile, dict), f"{path}.voice.profile",
                     "profile must be child, adult or an object")
            _require("f0_base" in profile, f"{path}.voice.profile.f0_base",
                     "explicit profiles need f0_base")
        voice["profile"] = profile
        childify_spec = voice.get("childify", None)
        if childify_spec is not None:
            _require(isinstance(childify_spec, dict), f"{path}.voice.childify",
                     "childify must be null or an object")
            semis = childify_spec.get("semitones", 4.0)
            rate = childify_spec.get("rate", 0.92)
            _require(semis >= 0, f"{path}.voice.childify.semitones", "must be >= 0")
            _require(0 < rate <= 1, f"{path}.voice.childify.rate", "must be in (0, 1]")
            voice["childify"] = {"semitones": float(semis), "rate": float(rate)}
        else:
            voice["childify"] = None
        subjects.append(SubjectSpec(sid, face, voice))

    out_raw = merged.get("output_dir") or os.environ.get(OUTPUT_ROOT_ENV) or "out"
    output_dir = Path(out_raw)
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir

    animator = merged["animator"]
    _require(animator.get("type") in ("procedural", "model"), "animator.type",
             "must be 'procedural' or 'model'")
    if animator["type"] == "model":
        _require(isinstance(animator.get("path"), str), "animator.path",
                 "model animators need a checkpoint path")

    pose = merged["pose"]
    _require(pose.get("type") in ("none", "sway"), "pose.type",
             "must be 'none' or 'sway'")

    return GenerationManifest(
        subjects=tuple(subjects),
        sentences=tuple(sentences),
        fps=fps,
        sample_rate=sample_rate,
        frame_size=(int(frame_size[0]), int(frame_size[1])),
        global_seed=int(merged["global_seed"]),
        output_dir=output_dir,
        blinks=merged["blinks"],
        pose=pose,
        animator=animator,
        quality_thresholds=merged["quality_thresholds"],
        base_dir=base_dir,
    )


def validate_manifest(path) -> GenerationManifest:
    """Parse and validate a manifest JSON file; defaults filled and echoed."""
    path = Path(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return _build_manifest(raw, path.parent.resolve())


def manifest_from_dict(raw: dict, base_dir=".") -> GenerationManifest:
    return _build_manifest(raw, Path(base_dir).resolve())


def plan(manifest: GenerationManifest) -> list:
    """|subjects| x |sentences| jobs in lexicographic order, seeds distinct."""
    jobs = []
    for sid in sorted(s.id for s in manifest.subjects):
        for idx in range(len(manifest.sentences)):
            jobs.append(Job(sid, idx, stable_seed(manifest.global_seed, sid, idx)))
    seeds = [j.seed for j in jobs]
    if len(set(seeds)) != len(seeds):
        raise ValidationError("derived job seeds collide; change global_seed")
    return jobs


def demo_manifest(n_subjects: int = 20, output_dir: str = "out") -> dict:
    """The shipped demonstration batch: generated faces, childified voices."""
    return {
        "global_seed": 20,
        "output_dir": output_dir,
        "sentences": [DEFAULT_SENTENCE],
        "subjects": [
            {"id": f"s{k:02d}",
             "face": {"type": "generated"},
             "voice": {"profile": "adult",
                       "childify": {"semitones": 4.0, "rate": 0.92}}}
            for k in range(1, n_subjects + 1)
        ],
    }
