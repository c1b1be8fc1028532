import json

import numpy as np
import pytest

from talkforge.audio import read_wav, sine_clip, write_wav, dominant_frequency
from talkforge.cli import main


class TestTtsCommand:
    def test_writes_wav(self, tmp_path, capsys):
        out = tmp_path / "x.wav"
        rc = main(["tts", "--text", "hello little bird", "--profile", "child",
                   "--seed", "3", "--out", str(out)])
        assert rc == 0
        clip = read_wav(out)
        assert clip.sample_rate == 16000
        assert len(clip) > 0

    def test_profile_file(self, tmp_path):
        profile = tmp_path / "v.profile"
        profile.write_text("f0_base=240\nspeaking_rate=10\n")
        out = tmp_path / "y.wav"
        rc = main(["tts", "--text", "aaa", "--profile", str(profile),
                   "--out", str(out)])
        assert rc == 0 and out.exists()


class TestChildifyCommand:
    def test_pitch_shifts_file(self, tmp_path):
        src = tmp_path / "in.wav"
        write_wav(sine_clip(220, 1.5, 16000), src)
        dst = tmp_path / "out.wav"
        rc = main(["childify", "--in", str(src), "--out", str(dst),
                   "--semitones", "12", "--rate", "1.0"])
        assert rc == 0
        out = read_wav(dst)
        assert dominant_frequency(out.samples, 16000) == pytest.approx(440, abs=2)

    def test_bpf_files(self, tmp_path):
        src = tmp_path / "in.wav"
        write_wav(sine_clip(220, 1.0, 16000), src)
        bpf = tmp_path / "rate.bpf"
        bpf.write_text("0.0 0.9\n1.0 0.8\n")
        dst = tmp_path / "out.wav"
        rc = main(["childify", "--in", str(src), "--out", str(dst),
                   "--semitones", "0", "--rate-bpf", str(bpf)])
        assert rc == 0 and dst.exists()

    def test_missing_input_exit_2(self, tmp_path):
        rc = main(["childify", "--in", str(tmp_path / "nope.wav"),
                   "--out", str(tmp_path / "o.wav")])
        assert rc == 2


class TestMosCommands:
    def test_add_and_report(self, tmp_path, capsys):
        survey = tmp_path / "survey.csv"
        answers = {"p1": "agree,agree,agree", "p2": "agree,disagree,agree"}
        for participant, ans in answers.items():
            rc = main(["mos", "add", "--survey", str(survey), "--clip", "c1",
                       "--participant", participant, "--answers", ans])
            assert rc == 0
        rc = main(["mos", "report", "--survey", str(survey)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "overall positive ratio" in out
        assert "75" in out  # published comparison figure

    def test_bad_answers_exit_2(self, tmp_path):
        rc = main(["mos", "add", "--survey", str(tmp_path / "s.csv"),
                   "--clip", "c", "--participant", "p", "--answers", "agree"])
        assert rc == 2


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-data")
    manifest = {
        "global_seed": 3,
        "output_dir": ".",
        "sentences": ["a warm wind moves the tall green grass now"],
        "subjects": [{"id": "c00", "face": {"type": "generated"},
                      "voice": {"profile": "child"}}],
    }
    mpath = root / "manifest.json"
    mpath.write_text(json.dumps(manifest))
    rc = main(["gen", "-m", str(mpath)])
    return rc, root


class TestGenAndFriends:

    def test_gen_exit_zero(self, dataset):
        rc, _ = dataset
        assert rc == 0

    def test_eval_subcommand(self, dataset, capsys):
        _, root = dataset
        rc = main(["eval", str(root / "c00" / "clip000"), "--no-figures"])
        assert rc == 0
        assert "overall         : PASS" in capsys.readouterr().out

    def test_summarize_subcommand(self, dataset, capsys):
        _, root = dataset
        rc = main(["summarize", str(root)])
        assert rc == 0
        assert "passed: 1" in capsys.readouterr().out

    def test_gen_missing_manifest_exit_2(self, tmp_path):
        rc = main(["gen", "-m", str(tmp_path / "none.json")])
        assert rc == 2

    def test_gen_invalid_manifest_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"subjects": [], "sentences": ["x"]}))
        rc = main(["gen", "-m", str(bad)])
        assert rc == 2

    def test_gen_demo_flag(self, tmp_path):
        rc = main(["gen", "--demo", "--demo-subjects", "1",
                   "-o", str(tmp_path / "demo")])
        assert rc == 0
        assert (tmp_path / "demo" / "manifest.json").exists()
        assert (tmp_path / "demo" / "s01" / "clip000" / "audio.wav").exists()


class TestSpeakerCommands:
    def test_train_embed_rank(self, tmp_path, capsys):
        model_path = tmp_path / "enc.json"
        rc = main(["speaker", "train", "--out", str(model_path),
                   "--speakers", "4", "--utterances", "4",
                   "--epochs", "3", "--seed", "1"])
        assert rc == 0 and model_path.exists()
        capsys.readouterr()

        from talkforge.tts import adult_profile, child_profile, synthesize
        from talkforge.audio import write_wav
        wavs = {}
        for name, profile in (("adult-x", adult_profile(1)),
                              ("adult-y", adult_profile(2)),
                              ("kid-a", child_profile(1))):
            clip = synthesize("a warm wind moves the tall green grass now",
                              profile, 16000, seed=4)
            path = tmp_path / f"{name}.wav"
            write_wav(clip, path)
            wavs[name] = str(path)

        rc = main(["speaker", "embed", "--model", str(model_path),
                   "--wav", wavs["kid-a"]])
        assert rc == 0
        out = capsys.readouterr().out
        assert len(out.split()) == 16  # embedding dimension

        rc = main(["speaker", "rank", "--model", str(model_path),
                   "--adult-wavs", wavs["adult-x"], wavs["adult-y"],
                   "--child-wavs", wavs["kid-a"]])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        sims = [float(line.split("\t")[1]) for line in lines]
        assert sims == sorted(sims, reverse=True)
