"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with -v or -s for per-criterion visibility)."""
import json
import struct
import time

import numpy as np
import pytest

from talkforge import rnn
from talkforge.animator import (animate, animator_loss_and_grads,
                                procedural_articulate)
from talkforge.audio import dominant_frequency, read_wav, sine_clip, write_wav
from talkforge.landmarks import LandmarkSequence, canonical_template
from talkforge.manifest import demo_manifest, manifest_from_dict
from talkforge.pipeline import run
from talkforge.quality import (MosResponse, aggregate_mos, lip_sync_score)
from talkforge.render import (FaceParams, derive_template, generate_test_face,
                              render_clip, triangulate, warp_frame)
from talkforge.speaker import (EmbeddingBatch, GE2EParams, ge2e_loss,
                               separation_score)
from talkforge.toydata import childify_direction_score
from talkforge.voice import BreakpointFunction, PV_HOP, pitch_shift, time_stretch

RATE = 16000


def report(num, ok, detail=""):
    print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


class Timer:
    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.seconds = time.monotonic() - self.t0


def test_criterion_01_audio_format(tmp_path):
    """16 kHz PCM16 mono, 32000 B/s byte rate, 3.5 s -> 56000 samples."""
    with Timer() as t:
        clip = sine_clip(440, 3.5, RATE, amplitude=0.4)
        path = tmp_path / "clip.wav"
        write_wav(clip, path)
        raw = path.read_bytes()
        fmt = struct.unpack_from("<HHIIHH", raw, 20)
        audio_format, channels, rate, byte_rate, _block, bits = fmt
        back = read_wav(path)
        ok = (audio_format == 1 and channels == 1 and rate == 16000
              and byte_rate == 32000 and bits == 16 and len(back) == 56000)
    report(1, ok and t.seconds < 1.0,
           f"byte_rate={byte_rate} samples={len(back)} ({t.seconds:.2f}s)")


def test_criterion_02_pitch_law():
    """+12 st: 220 -> 440 +/- 2 Hz; +6 st: 300 -> 424.3 +/- 2 Hz."""
    with Timer() as t:
        up12 = pitch_shift(sine_clip(220, 2.0, RATE), 12)
        f12 = dominant_frequency(up12.samples, RATE)
        up6 = pitch_shift(sine_clip(300, 2.0, RATE), 6)
        f6 = dominant_frequency(up6.samples, RATE)
        ok = abs(f12 - 440) <= 2 and abs(f6 - 300 * 2 ** 0.5) <= 2
    report(2, ok and t.seconds < 5.0,
           f"f12={f12:.2f} f6={f6:.2f} ({t.seconds:.2f}s)")


def test_criterion_03_stretch_law():
    """1.5x on 2 s -> 3 s +/- 1 hop, peak +/- 2 Hz; BPF integral law."""
    with Timer() as t:
        out = time_stretch(sine_clip(440, 2.0, RATE), 1.5)
        f = dominant_frequency(out.samples, RATE)
        bpf_out = time_stretch(sine_clip(440, 2.0, RATE),
                               BreakpointFunction(((0.0, 1.0), (2.0, 2.0))))
        ok = (abs(len(out) - 48000) <= PV_HOP and abs(f - 440) <= 2
              and abs(len(bpf_out) - 48000) <= PV_HOP)
    report(3, ok and t.seconds < 5.0,
           f"len={len(out)} f={f:.2f} bpf_len={len(bpf_out)} ({t.seconds:.2f}s)")


def test_criterion_04_ge2e_exact():
    """Orthogonal 2x2 batch and degenerate identical batch, 1e-6 tolerance."""
    E = np.zeros((2, 2, 2))
    E[0, :, 0] = 1.0
    E[1, :, 1] = 1.0
    loss_orth = ge2e_loss(EmbeddingBatch(E), GE2EParams(1.0, 0.0))
    expected = 4 * (-1 + np.log(1 + np.e))
    E2 = np.zeros((3, 4, 6))
    E2[:, :, 0] = 1.0
    loss_same = ge2e_loss(EmbeddingBatch(E2), GE2EParams(7.0, -3.0))
    ok = (abs(loss_orth - expected) < 1e-6
          and abs(loss_same - 3 * 4 * np.log(3)) < 1e-6)
    report(4, ok, f"orth={loss_orth:.7f} (expect {expected:.7f}) "
                  f"same={loss_same:.7f} (expect {3 * 4 * np.log(3):.7f})")


def test_criterion_05_encoder_training(speaker_model, speaker_split):
    """8x10 toy corpus: loss < 20% of initial; held-out separation >= 0.3."""
    with Timer() as t:
        _train, held = speaker_split
        ratio = speaker_model.history[-1] / speaker_model.history[0]
        gap = separation_score(speaker_model, held)
        ok = ratio < 0.2 and gap >= 0.3
    report(5, ok and t.seconds < 300,
           f"loss_ratio={ratio:.4f} separation={gap:.3f} ({t.seconds:.1f}s)")


def test_criterion_06_childify_direction(speaker_model, speaker_corpus):
    """>= 80% of toy adult speakers move toward the child centroid."""
    with Timer() as t:
        frac = childify_direction_score(speaker_model, speaker_corpus)
        ok = frac >= 0.8
    report(6, ok and t.seconds < 180, f"improved={frac:.0%} ({t.seconds:.1f}s)")


def test_criterion_07_animator(animator_model, animator_split):
    """Gradient check <= 1e-4; held-out lip-sync r >= 0.8; oracle r >= 0.99."""
    with Timer() as t:
        rng = np.random.default_rng(2)
        params = rnn.init_params(rng, 8, 5, 7)
        X = rng.normal(size=(1, 2, 8))
        targets = rng.normal(size=(1, 2, 7)) * 0.1
        mask = np.ones((1, 2))
        _, grads = animator_loss_and_grads(params, X, targets, mask)
        eps = 1e-5
        worst = 0.0
        for name in params.names():
            arr = getattr(params, name)
            num = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                old = arr[idx]
                arr[idx] = old + eps
                lp, _ = animator_loss_and_grads(params, X, targets, mask)
                arr[idx] = old - eps
                lm, _ = animator_loss_and_grads(params, X, targets, mask)
                arr[idx] = old
                num[idx] = (lp - lm) / (2 * eps)
                it.iternext()
            rel = (np.linalg.norm(num - grads[name])
                   / max(np.linalg.norm(num), np.linalg.norm(grads[name]), 1e-300))
            worst = max(worst, rel)

        template = canonical_template()
        _train, held = animator_split
        learned_r = min(
            lip_sync_score(animate(animator_model, ex.feats,
                                   ex.speaker_embedding, template, 25.0),
                           ex.audio, 25.0)
            for ex in held)
        from talkforge.audio import rms_envelope
        oracle_r = min(
            lip_sync_score(procedural_articulate(ex.feats,
                                                 rms_envelope(ex.audio),
                                                 template, 25.0),
                           ex.audio, 25.0)
            for ex in held)
        ok = worst <= 1e-4 and learned_r >= 0.8 and oracle_r >= 0.99
    report(7, ok and t.seconds < 300,
           f"gradcheck={worst:.2e} learned_r={learned_r:.3f} "
           f"oracle_r={oracle_r:.4f} ({t.seconds:.1f}s)")


def test_criterion_08_renderer():
    """Identity warp bit-exact; 5 px translation recovered; zero clip == seed."""
    face = generate_test_face(FaceParams(), seed=5)
    mesh = triangulate(face)
    identity = warp_frame(face, mesh, face.landmarks2d)
    identity_exact = np.array_equal(identity.image, face.image)

    shifted = warp_frame(face, mesh, face.landmarks2d + [5.0, 0.0]).image
    from talkforge.quality import face_box
    x0, y0, x1, y1 = (int(v) for v in face_box(face.landmarks2d, 0.0,
                                               face.image.shape[:2]))
    a = face.image[y0:y1, x0:x1].astype(float).mean(axis=2)
    b = shifted[y0:y1, x0:x1].astype(float).mean(axis=2)
    best, best_shift = -2.0, None
    for sh in range(-8, 9):
        c = np.corrcoef(a[:, 8:-8].ravel(),
                        b[:, 8 + sh:b.shape[1] - 8 + sh].ravel())[0, 1]
        if c > best:
            best, best_shift = c, sh
    translation_ok = abs(best_shift - 5) <= 1

    template, _cam = derive_template(face)
    n = 8
    frames = np.repeat(template.points[None], n, axis=0)
    seq = LandmarkSequence(frames, 25.0, n / 25)
    clip = render_clip(face, seq, sine_clip(300, n / 25, RATE))
    zero_ok = all(np.array_equal(f, face.image) for f in clip.frames)

    ok = identity_exact and translation_ok and zero_ok
    report(8, ok, f"identity={identity_exact} shift={best_shift} zero={zero_ok}")


@pytest.fixture(scope="module")
def demo_runs(tmp_path_factory):
    root_a = tmp_path_factory.mktemp("demo-a")
    root_b = tmp_path_factory.mktemp("demo-b")
    with Timer() as t:
        results_a = run(manifest_from_dict(demo_manifest(output_dir=str(root_a))),
                        workers=2)
        results_b = run(manifest_from_dict(demo_manifest(output_dir=str(root_b))),
                        workers=2)
    return root_a, root_b, results_a, results_b, t.seconds


def test_criterion_09_end_to_end(demo_runs):
    """20 clips, every quality gate passes, byte-identical reruns, < 10 min."""
    root_a, root_b, results_a, _results_b, seconds = demo_runs
    n_ok = sum(r.status == "ok" for r in results_a)
    n_quality = sum(bool(r.quality_pass) for r in results_a)

    gates_ok = True
    for quality_path in sorted(root_a.glob("*/clip*/quality.json")):
        q = json.loads(quality_path.read_text())
        m = q["metrics"]
        gates_ok &= m["landmark_sanity"]["pass"]
        gates_ok &= m["identity_similarity"]["min"] >= 0.80
        gates_ok &= m["lip_sync"]["r"] is not None and m["lip_sync"]["r"] >= 0.8
        gates_ok &= m["histogram_motion"]["nonzero_frac"] > 0.90

    identical = True
    clip_dirs = sorted(p.parent for p in root_a.glob("*/clip*/meta.json"))
    for a_dir in clip_dirs:
        b_dir = root_b / a_dir.relative_to(root_a)
        for name in ("audio.wav", "landmarks.csv"):
            if (a_dir / name).read_bytes() != (b_dir / name).read_bytes():
                identical = False

    ok = (len(results_a) == 20 and n_ok == 20 and n_quality == 20
          and gates_ok and identical and seconds < 600)
    report(9, ok, f"clips={n_ok}/20 quality={n_quality}/20 gates={gates_ok} "
                  f"byte_identical={identical} ({seconds:.0f}s)")


def test_criterion_10_mos_arithmetic(capsys):
    """Counts (5,4,5)/6 -> (0.833, 0.667, 0.833), overall 0.778; report
    prints the published 75% figure alongside."""
    patterns = [("agree",) * 3] * 4 + [("agree", "disagree", "agree"),
                                       ("disagree", "disagree", "disagree")]
    agg = aggregate_mos([MosResponse(f"p{i}", p) for i, p in enumerate(patterns)])
    values_ok = (np.allclose(agg.per_question, (0.833, 0.667, 0.833), atol=1e-3)
                 and abs(agg.overall - 0.778) < 1e-3)

    import talkforge.cli as cli
    survey = None
    import tempfile, os
    with tempfile.TemporaryDirectory() as d:
        survey = os.path.join(d, "survey.csv")
        for i, p in enumerate(patterns):
            cli.main(["mos", "add", "--survey", survey, "--clip", "demo",
                      "--participant", f"p{i}", "--answers", ",".join(p)])
        capsys.readouterr()
        rc = cli.main(["mos", "report", "--survey", survey])
        out = capsys.readouterr().out
    prints_reference = "75" in out and rc == 0
    ok = values_ok and prints_reference
    report(10, ok, f"per_question={tuple(round(v, 3) for v in agg.per_question)} "
                   f"overall={agg.overall:.3f} reference_printed={prints_reference}")
