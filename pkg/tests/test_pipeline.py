import json

import pytest

from talkforge.manifest import manifest_from_dict
from talkforge.pipeline import eval_clip_dir, run, summarize, write_summary


def small_manifest(out_dir, n_subjects=2, **overrides):
    blob = {
        "global_seed": 7,
        "output_dir": str(out_dir),
        "sentences": ["put the red apple near the open window"],
        "subjects": [
            {"id": f"t{k:02d}", "face": {"type": "generated"},
             "voice": {"profile": "adult",
                       "childify": {"semitones": 4.0, "rate": 0.92}}}
            for k in range(n_subjects)
        ],
    }
    blob.update(overrides)
    return manifest_from_dict(blob)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    manifest = small_manifest(out)
    results = run(manifest)
    return manifest, results


class TestRun:
    def test_all_jobs_ok(self, small_run):
        _, results = small_run
        assert all(r.status == "ok" for r in results)
        assert all(r.quality_pass for r in results)

    def test_clip_tree(self, small_run):
        manifest, results = small_run
        for r in results:
            clip_dir = manifest.output_dir / r.job.subject_id / "clip000"
            for name in ("audio.wav", "landmarks.csv", "meta.json",
                         "quality.json", "seed.png"):
                assert (clip_dir / name).exists(), name
            assert (clip_dir / "frames" / "00001.png").exists()
            assert (clip_dir / "figures" / "waveform.png").exists()
            assert (clip_dir / "figures" / "waveform.txt").exists()

    def test_quality_json_structure(self, small_run):
        manifest, results = small_run
        clip_dir = manifest.output_dir / results[0].job.subject_id / "clip000"
        q = json.loads((clip_dir / "quality.json").read_text())
        assert q["overall_pass"] is True
        assert set(q["metrics"]) == {"landmark_sanity", "identity_similarity",
                                     "lip_sync", "histogram_motion"}
        assert q["thresholds"]["identity_min"] == 0.80

    def test_isolation(self, small_run):
        manifest, results = small_run
        roots = {r.clip_dir for r in results}
        assert len(roots) == len(results)

    def test_summary_written(self, small_run):
        manifest, _ = small_run
        summary = json.loads((manifest.output_dir / "summary.json").read_text())
        assert summary["clips"] == 2
        assert summary["passed"] == 2
        assert (manifest.output_dir / "summary.csv").exists()
        assert (manifest.output_dir / "figures" / "summary.png").exists()

    def test_eval_clip_dir_recomputes(self, small_run):
        manifest, results = small_run
        clip_dir = manifest.output_dir / results[0].job.subject_id / "clip000"
        report = eval_clip_dir(clip_dir, render_figures=False)
        assert report.overall_pass

    def test_unwritable_output(self, tmp_path):
        blocked = tmp_path / "blocked"
        blocked.touch()  # a file, not a directory
        manifest = small_manifest(blocked / "sub", n_subjects=1)
        with pytest.raises(Exception):
            run(manifest)


class TestDeterminism:
    def test_audio_and_landmarks_byte_identical(self, tmp_path):
        m1 = small_manifest(tmp_path / "a", n_subjects=1)
        m2 = small_manifest(tmp_path / "b", n_subjects=1)
        run(m1)
        run(m2)
        for name in ("audio.wav", "landmarks.csv"):
            a = (m1.output_dir / "t00" / "clip000" / name).read_bytes()
            b = (m2.output_dir / "t00" / "clip000" / name).read_bytes()
            assert a == b, name

    def test_frames_byte_identical(self, tmp_path):
        m1 = small_manifest(tmp_path / "a2", n_subjects=1)
        m2 = small_manifest(tmp_path / "b2", n_subjects=1)
        run(m1)
        run(m2)
        a = (m1.output_dir / "t00" / "clip000" / "frames" / "00003.png").read_bytes()
        b = (m2.output_dir / "t00" / "clip000" / "frames" / "00003.png").read_bytes()
        assert a == b


class TestFailureHandling:
    def test_missing_face_file_fails_job_not_batch(self, tmp_path):
        blob = {
            "global_seed": 1,
            "output_dir": str(tmp_path / "out"),
            "sentences": ["five ducks swim across the calm silver lake"],
            "subjects": [
                {"id": "ok", "face": {"type": "generated"},
                 "voice": {"profile": "child"}},
                {"id": "broken", "face": {"type": "files",
                                          "image": "missing.png",
                                          "landmarks": "missing.csv"},
                 "voice": {"profile": "child"}},
            ],
        }
        manifest = manifest_from_dict(blob, base_dir=tmp_path)
        results = run(manifest)
        by_id = {r.job.subject_id: r for r in results}
        assert by_id["ok"].status == "ok"
        assert by_id["broken"].status == "failed"
        assert by_id["broken"].error

    def test_summarize_flags_missing_quality(self, tmp_path):
        manifest = small_manifest(tmp_path / "out", n_subjects=1)
        run(manifest)
        clip_dir = manifest.output_dir / "t00" / "clip000"
        (clip_dir / "quality.json").unlink()
        summary = summarize(manifest.output_dir)
        assert summary["clips"] == 0
        assert summary["missing_quality"] == ["t00/clip000"]

    def test_summarize_empty_root(self, tmp_path):
        summary = summarize(tmp_path)
        assert summary["clips"] == 0
        write_summary(tmp_path, summary)
        assert (tmp_path / "summary.json").exists()


def test_sway_pose_writes_track_and_passes(tmp_path):
    manifest = small_manifest(
        tmp_path / "sway", n_subjects=1,
        pose={"type": "sway", "yaw_amp": 0.05, "pitch_amp": 0.025,
              "period_s": 2.5})
    results = run(manifest)
    assert results[0].status == "ok" and results[0].quality_pass
    clip_dir = manifest.output_dir / "t00" / "clip000"
    assert (clip_dir / "pose.csv").exists()
    header = (clip_dir / "pose.csv").read_text().splitlines()[0]
    assert header == "frame,yaw,pitch,roll"


def test_model_animator_path(tmp_path, animator_model):
    from talkforge.animator import save_animator
    ck = tmp_path / "animator.json"
    save_animator(animator_model, ck)
    manifest = small_manifest(
        tmp_path / "model-out", n_subjects=1,
        subjects=[{"id": "m0", "face": {"type": "generated"},
                   "voice": {"profile": "child"}}],
        animator={"type": "model", "path": str(ck)})
    results = run(manifest)
    assert results[0].status == "ok"
    q = json.loads((manifest.output_dir / "m0" / "clip000"
                    / "quality.json").read_text())
    assert q["metrics"]["lip_sync"]["r"] >= 0.8


def test_workers_parallel_equivalent(tmp_path):
    m1 = small_manifest(tmp_path / "w1", n_subjects=2)
    m2 = small_manifest(tmp_path / "w2", n_subjects=2)
    run(m1, workers=1)
    run(m2, workers=2)
    for sid in ("t00", "t01"):
        a = (m1.output_dir / sid / "clip000" / "landmarks.csv").read_bytes()
        b = (m2.output_dir / sid / "clip000" / "landmarks.csv").read_bytes()
        assert a == b
