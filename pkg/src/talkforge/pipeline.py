"""Batch execution of generation manifests and dataset summarization.

Per job: synthesize (and optionally childify) the voice, derive features and
envelope, animate the subject's landmark template, inject blinks, apply any
configured head pose, project, warp-render frames, then evaluate and write
the quality report with its figures. Jobs are independent and individually
seeded, so batches are reproducible and may run on several workers.
"""
from __future__ import annotations

import json
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import figures as figs
from .animator import animate, load_animator, procedural_articulate
from .audio import AudioClip, features, read_wav, rms_envelope, write_wav
from .errors import ValidationError
from .landmarks import (apply_head_pose, inject_blinks, mouth_opening,
                        read_landmarks, sway_pose, write_landmarks, write_pose)
from .manifest import GenerationManifest, Job, JobResult, plan
from .quality import evaluate_clip, frame_histograms, lip_sync_score
from .render import (Camera, FaceParams, SeedFace, derive_template,
                     generate_test_face, load_seed_face, project, render_clip,
                     save_frames)
from .toydata import stable_seed
from .tts import VoiceProfile, adult_profile, child_profile, synthesize
from .voice import ChildifyParams, childify


def _subject_map(manifest: GenerationManifest) -> dict:
    return {s.id: s for s in manifest.subjects}


def _make_seed_face(manifest: GenerationManifest, subject) -> SeedFace:
    face = subject.face
    if face["type"] == "generated":
        seed = stable_seed(manifest.global_seed, subject.id, "face")
        h, w = manifest.frame_size
        return generate_test_face(FaceParams(h, w), seed % (2 ** 32))
    image = manifest.base_dir / face["image"]
    landmarks = manifest.base_dir / face["landmarks"]
    return load_seed_face(image, landmarks, subject.id)


def _make_profile(manifest: GenerationManifest, subject) -> VoiceProfile:
    spec = subject.voice["profile"]
    if isinstance(spec, dict):
        return VoiceProfile(
            f0_base=float(spec["f0_base"]),
            f0_jitter=float(spec.get("f0_jitter", 0.01)),
            formant_scale=float(spec.get("formant_scale", 1.0)),
            speaking_rate=float(spec.get("speaking_rate", 11.0)),
            name=spec.get("name", f"{subject.id}-voice"),
        )
    seed = stable_seed(manifest.global_seed, subject.id, "voice") % 100000
    return child_profile(seed) if spec == "child" else adult_profile(seed)


def _clip_dir(manifest: GenerationManifest, job: Job) -> Path:
    return manifest.output_dir / job.subject_id / f"clip{job.sentence_index:03d}"


def run_job(manifest: GenerationManifest, job: Job, animator_model=None) -> JobResult:
    start = time.monotonic()
    result = JobResult(job, "failed")
    try:
        subject = _subject_map(manifest)[job.subject_id]
        out_dir = _clip_dir(manifest, job)
        out_dir.mkdir(parents=True, exist_ok=True)

        seed_face = _make_seed_face(manifest, subject)
        profile = _make_profile(manifest, subject)
        text = manifest.sentences[job.sentence_index]
        clip = synthesize(text, profile, manifest.sample_rate, seed=job.seed)
        if subject.voice["childify"] is not None:
            cp = subject.voice["childify"]
            clip = childify(clip, ChildifyParams(cp["semitones"], cp["rate"]))
        feats = features(clip)
        env = rms_envelope(clip)

        template, camera = derive_template(seed_face)
        if manifest.animator["type"] == "model" and animator_model is not None:
            emb = np.zeros(animator_model.emb_dim)
            seq = animate(animator_model, feats, emb, template, manifest.fps)
        else:
            seq = procedural_articulate(feats, env, template, manifest.fps)

        if manifest.blinks.get("enabled", True):
            seq = inject_blinks(seq, stable_seed(job.seed, "blinks"),
                                manifest.blinks["min_gap_s"],
                                manifest.blinks["max_gap_s"],
                                manifest.blinks["blink_dur_s"])
        pose_track = None
        if manifest.pose["type"] == "sway":
            pose_track = sway_pose(len(seq), manifest.fps,
                                   manifest.pose.get("yaw_amp", 0.08),
                                   manifest.pose.get("pitch_amp", 0.04),
                                   manifest.pose.get("period_s", 2.5),
                                   stable_seed(job.seed, "pose"))
            seq = apply_head_pose(seq, pose_track)

        clip_frames = render_clip(seed_face, seq, clip)

        write_wav(clip, out_dir / "audio.wav")
        write_landmarks(seq, out_dir / "landmarks.csv")
        if pose_track is not None:
            write_pose(pose_track, out_dir / "pose.csv")
        save_frames(clip_frames, out_dir / "frames")
        Image.fromarray(seed_face.image).save(out_dir / "seed.png")

        meta = {
            "subject": subject.id,
            "sentence_index": job.sentence_index,
            "sentence": text,
            "fps": manifest.fps,
            "sample_rate": manifest.sample_rate,
            "frame_size": list(clip_frames.frames[0].shape[:2]),
            "audio": "audio.wav",
            "camera": {"scale": camera.scale, "cx": camera.cx, "cy": camera.cy},
            "seed_landmarks": seed_face.landmarks2d.tolist(),
            "frame_flags": clip_frames.flags,
            "job_seed": job.seed,
            "voice": {"profile_name": profile.name,
                      "childify": subject.voice["childify"]},
            "animator": manifest.animator["type"],
        }
        with open(out_dir / "meta.json", "w") as fh:
            json.dump(meta, fh, indent=1)

        report = evaluate_clip(clip_frames.frames, seed_face.image,
                               seed_face.landmarks2d, clip_frames.landmarks2d,
                               seq, clip, manifest.fps,
                               frame_flags=clip_frames.flags,
                               thresholds=manifest.quality_thresholds)
        with open(out_dir / "quality.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)
        _clip_figures(out_dir, clip, clip_frames.frames, seq, manifest.fps)

        result.status = "ok"
        result.clip_dir = str(out_dir)
        result.quality_pass = report.overall_pass
    except Exception as exc:  # jobs fail independently; batch continues
        result.error = f"{type(exc).__name__}: {exc}"
        result.clip_dir = str(_clip_dir(manifest, job))
        result.traceback = traceback.format_exc()
    result.seconds = time.monotonic() - start
    return result


def _clip_figures(out_dir: Path, clip: AudioClip, frames, seq, fps) -> None:
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    figs.waveform_figure(clip, fig_dir / "waveform.png", fig_dir / "waveform.txt")
    hists, dists = frame_histograms(frames)
    figs.histogram_figure(hists, dists, fig_dir / "histograms.png")
    opening = mouth_opening(seq.frames)
    env = rms_envelope(clip)
    times = np.arange(len(seq)) / fps
    env_f = env.at_times(times)
    try:
        r = lip_sync_score(seq, clip, fps)
    except Exception:
        r = float("nan")
    figs.lipsync_figure(times, opening, env_f, r, fig_dir / "lipsync.png")


def run(manifest: GenerationManifest, workers: int = 1, log=None) -> list:
    """Execute the full plan; returns one JobResult per job."""
    jobs = plan(manifest)
    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    probe = manifest.output_dir / ".write-probe"
    try:
        probe.write_text("ok")
        probe.unlink()
    except OSError as exc:
        raise ValidationError(f"output dir not writable: {exc}") from exc

    with open(manifest.output_dir / "manifest_resolved.json", "w") as fh:
        json.dump(manifest.to_jsonable(), fh, indent=1)

    animator_model = None
    if manifest.animator["type"] == "model":
        animator_model = load_animator(manifest.base_dir / manifest.animator["path"])

    if workers <= 1:
        results = [run_job(manifest, job, animator_model) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: run_job(manifest, j, animator_model), jobs))
    if log is not None:
        for r in results:
            mark = "ok" if r.status == "ok" else "FAILED"
            qual = ("pass" if r.quality_pass else "FAIL") if r.quality_pass is not None else "-"
            log(f"{r.job.subject_id}/clip{r.job.sentence_index:03d}: {mark} "
                f"quality={qual} ({r.seconds:.1f}s) {r.error}")
    summary = summarize(manifest.output_dir)
    write_summary(manifest.output_dir, summary)
    return results


# ---------------------------------------------------------------------------
# Summaries

def summarize(root) -> dict:
    """Aggregate quality reports under a dataset root (missing ones flagged)."""
    root = Path(root)
    rows = []
    missing = []
    for quality_path in sorted(root.glob("*/clip*/quality.json")):
        clip_dir = quality_path.parent
        with open(quality_path) as fh:
            q = json.load(fh)
        m = q["metrics"]
        rows.append({
            "clip": str(clip_dir.relative_to(root)),
            "identity_min": m["identity_similarity"]["min"],
            "identity_mean": m["identity_similarity"]["mean"],
            "lip_sync_r": m["lip_sync"]["r"],
            "hist_nonzero_frac": m["histogram_motion"]["nonzero_frac"],
            "sanity_pass": m["landmark_sanity"]["pass"],
            "overall_pass": q["overall_pass"],
        })
    for meta_path in sorted(root.glob("*/clip*/meta.json")):
        if not (meta_path.parent / "quality.json").exists():
            missing.append(str(meta_path.parent.relative_to(root)))

    def _stats(key):
        vals = [r[key] for r in rows if r[key] is not None]
        if not vals:
            return None
        return {"min": float(np.min(vals)), "mean": float(np.mean(vals)),
                "max": float(np.max(vals))}

    return {
        "clips": len(rows),
        "passed": sum(1 for r in rows if r["overall_pass"]),
        "failed": sum(1 for r in rows if not r["overall_pass"]),
        "missing_quality": missing,
        "identity_min": _stats("identity_min"),
        "lip_sync_r": _stats("lip_sync_r"),
        "rows": rows,
    }


def write_summary(root, summary: dict) -> None:
    """summary.json + summary.csv + overview figure under the dataset root."""
    root = Path(root)
    with open(root / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    with open(root / "summary.csv", "w") as fh:
        fh.write("clip,identity_min,identity_mean,lip_sync_r,"
                 "hist_nonzero_frac,sanity_pass,overall_pass\n")
        for r in summary["rows"]:
            fh.write(f"{r['clip']},{r['identity_min']:.6f},{r['identity_mean']:.6f},"
                     f"{r['lip_sync_r'] if r['lip_sync_r'] is not None else ''},"
                     f"{r['hist_nonzero_frac']:.6f},{r['sanity_pass']},{r['overall_pass']}\n")
    if summary["rows"]:
        fig_dir = root / "figures"
        fig_dir.mkdir(exist_ok=True)
        figs.summary_figure(summary["rows"], fig_dir / "summary.png")


# ---------------------------------------------------------------------------
# Re-evaluating a clip directory from disk

def eval_clip_dir(clip_dir, thresholds=None, render_figures: bool = True):
    """Recompute the quality report of a rendered clip from its files."""
    clip_dir = Path(clip_dir)
    with open(clip_dir / "meta.json") as fh:
        meta = json.load(fh)
    audio = read_wav(clip_dir / meta["audio"])
    seq = read_landmarks(clip_dir / "landmarks.csv", meta["fps"])
    camera = Camera(**meta["camera"])
    targets = project(seq, camera)
    frame_paths = sorted((clip_dir / "frames").glob("*.png"))
    if not frame_paths:
        raise ValidationError(f"{clip_dir}: no rendered frames")
    frames = [np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8)
              for p in frame_paths]
    seed_image = np.asarray(Image.open(clip_dir / "seed.png").convert("RGB"),
                            dtype=np.uint8)
    seed_landmarks = np.asarray(meta["seed_landmarks"], dtype=np.float64)
    report = evaluate_clip(frames, seed_image, seed_landmarks, targets, seq,
                           audio, meta["fps"], frame_flags=meta.get("frame_flags"),
                           thresholds=thresholds)
    with open(clip_dir / "quality.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    if render_figures:
        _clip_figures(clip_dir, audio, frames, seq, meta["fps"])
    return report
