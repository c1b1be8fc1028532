"""forge: manifest-driven clip generation and evaluation CLI.

Exit codes: 0 everything passed, 1 a job or quality gate failed,
2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio import read_wav, write_wav
from .errors import AudioFormatError, ValidationError
from .manifest import demo_manifest, plan, validate_manifest
from .pipeline import eval_clip_dir, run, summarize, write_summary
from .quality import (PUBLISHED_SUMMARY_RATIO, SURVEY_QUESTIONS, aggregate_mos,
                      collect_mos, read_survey)
from .speaker import (centroid, embed_utterance, load_encoder, rank_adults,
                      save_encoder, separation_score, train_encoder,
                      EncoderConfig)
from .toydata import make_speaker_corpus, split_corpus
from .tts import adult_profile, child_profile, load_profile, synthesize
from .voice import ChildifyParams, childify, load_bpf


def _cmd_gen(args) -> int:
    if args.demo:
        out_root = Path(args.output or "out")
        out_root.mkdir(parents=True, exist_ok=True)
        manifest_path = out_root / "manifest.json"
        blob = demo_manifest(n_subjects=args.demo_subjects, output_dir=".")
        with open(manifest_path, "w") as fh:
            json.dump(blob, fh, indent=1)
        manifest = validate_manifest(manifest_path)
    elif args.manifest:
        manifest = validate_manifest(args.manifest)
    else:
        print("gen: need -m/--manifest or --demo", file=sys.stderr)
        return 2
    jobs = plan(manifest)
    print(f"planned {len(jobs)} jobs "
          f"({len(manifest.subjects)} subjects x {len(manifest.sentences)} sentences)")
    results = run(manifest, workers=args.workers, log=print)
    failed = [r for r in results if r.status != "ok" or r.quality_pass is False]
    print(f"done: {len(results) - len(failed)}/{len(results)} clips passed; "
          f"outputs under {manifest.output_dir}")
    return 1 if failed else 0


def _cmd_childify(args) -> int:
    clip = read_wav(args.infile)
    params = ChildifyParams(
        pitch_up_semitones=args.semitones,
        rate_factor=args.rate,
        pitch_bpf=load_bpf(args.pitch_bpf) if args.pitch_bpf else None,
        rate_bpf=load_bpf(args.rate_bpf) if args.rate_bpf else None,
    )
    out = childify(clip, params)
    write_wav(out, args.outfile)
    print(f"wrote {args.outfile}: {out.duration_seconds:.2f}s at {out.sample_rate} Hz")
    return 0


def _cmd_tts(args) -> int:
    if args.profile == "child":
        profile = child_profile(args.seed)
    elif args.profile == "adult":
        profile = adult_profile(args.seed)
    else:
        profile = load_profile(args.profile)
    clip = synthesize(args.text, profile, args.rate, seed=args.seed)
    write_wav(clip, args.out)
    print(f"wrote {args.out}: {clip.duration_seconds:.2f}s, voice {profile.name}")
    return 0


def _cmd_eval(args) -> int:
    report = eval_clip_dir(args.clip_dir, render_figures=not args.no_figures)
    m = report.metrics
    print(f"landmark sanity : {'pass' if m['landmark_sanity']['pass'] else 'FAIL'} "
          f"({len(m['landmark_sanity']['violations'])} violations)")
    print(f"identity        : min {m['identity_similarity']['min']:.3f} "
          f"mean {m['identity_similarity']['mean']:.3f} "
          f"{'pass' if m['identity_similarity']['pass'] else 'FAIL'}")
    r = m["lip_sync"]["r"]
    print(f"lip sync        : r {r if r is None else format(r, '.3f')} "
          f"{'pass' if m['lip_sync']['pass'] else 'FAIL'}")
    print(f"histogram motion: nonzero {m['histogram_motion']['nonzero_frac']:.3f} "
          f"{'pass' if m['histogram_motion']['pass'] else 'FAIL'}")
    print(f"overall         : {'PASS' if report.overall_pass else 'FAIL'}")
    return 0 if report.overall_pass else 1


def _cmd_summarize(args) -> int:
    summary = summarize(args.root)
    write_summary(args.root, summary)
    print(f"clips: {summary['clips']}  passed: {summary['passed']}  "
          f"failed: {summary['failed']}")
    if summary["missing_quality"]:
        print(f"missing quality reports: {', '.join(summary['missing_quality'])}")
    for key in ("identity_min", "lip_sync_r"):
        stats = summary[key]
        if stats:
            print(f"{key}: min {stats['min']:.3f} mean {stats['mean']:.3f} "
                  f"max {stats['max']:.3f}")
    print(f"wrote summary.json, summary.csv and figures/ under {args.root}")
    return 0 if summary["clips"] and not summary["failed"] else (1 if summary["failed"] else 0)


def _cmd_mos(args) -> int:
    if args.mos_cmd == "add":
        answers = [a.strip() for a in args.answers.split(",")]
        collect_mos(args.survey, args.clip, args.participant, answers)
        print(f"recorded response from {args.participant} in {args.survey}")
        return 0
    responses = read_survey(args.survey)
    agg = aggregate_mos(responses)
    for i, (q, ratio) in enumerate(zip(SURVEY_QUESTIONS, agg.per_question), 1):
        print(f"q{i} ({q}): {ratio:.3f}")
    print(f"overall positive ratio: {agg.overall:.3f} "
          f"({agg.participants} participants)")
    print(f"published summary figure for comparison: "
          f"{PUBLISHED_SUMMARY_RATIO:.0%} (rounded; exact arithmetic over the "
          f"canonical 5,4,5-of-6 counts gives 0.778)")
    return 0


def _cmd_speaker(args) -> int:
    if args.speaker_cmd == "train":
        corpus, _profiles = make_speaker_corpus(
            n_adult=args.speakers // 2, n_child=args.speakers - args.speakers // 2,
            n_utterances=args.utterances, seed=args.seed)
        holdout = 2 if args.utterances - 2 >= 4 else 0
        if holdout:
            train, held = split_corpus(corpus, holdout=holdout)
        else:
            train, held = corpus, corpus
        config = EncoderConfig(epochs=args.epochs)
        model = train_encoder(train, config, seed=args.seed)
        save_encoder(model, args.out)
        gap = separation_score(model, held)
        label = "held-out" if holdout else "train-set"
        print(f"trained on {len(train)} speakers x {args.utterances - holdout} "
              f"utterances; loss {model.history[0]:.3f} -> {model.history[-1]:.3f}; "
              f"{label} separation {gap:.3f}")
        print(f"wrote {args.out}")
        return 0
    model = load_encoder(args.model)
    if args.speaker_cmd == "embed":
        emb = embed_utterance(model, read_wav(args.wav))
        vec = " ".join(f"{v:.6f}" for v in emb.vector)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(vec + "\n")
            print(f"wrote {args.out}")
        else:
            print(vec)
        return 0
    # rank
    child_embs = [embed_utterance(model, read_wav(p)) for p in args.child_wavs]
    child_ctr = centroid(child_embs)
    adults = {Path(p).stem: embed_utterance(model, read_wav(p))
              for p in args.adult_wavs}
    for name, sim in rank_adults(adults, child_ctr):
        print(f"{name}\t{sim:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge",
        description="Generate and evaluate synthetic talking-face clip datasets.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="run a generation manifest")
    p.add_argument("-m", "--manifest", help="manifest JSON path")
    p.add_argument("--demo", action="store_true",
                   help="write and run the built-in demo manifest")
    p.add_argument("--demo-subjects", type=int, default=20)
    p.add_argument("-o", "--output", help="output root for --demo")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("childify", help="child-like voice transformation")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--semitones", type=float, default=4.0)
    p.add_argument("--rate", type=float, default=0.92)
    p.add_argument("--pitch-bpf", help="two-column (time_s factor) file")
    p.add_argument("--rate-bpf", help="two-column (time_s factor) file")
    p.set_defaults(func=_cmd_childify)

    p = sub.add_parser("tts", help="synthesize text with a stub voice")
    p.add_argument("--text", required=True)
    p.add_argument("--profile", default="child",
                   help="child, adult, or a key=value profile file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tts)

    p = sub.add_parser("eval", help="re-evaluate a rendered clip directory")
    p.add_argument("clip_dir")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("summarize", help="aggregate a dataset root")
    p.add_argument("root")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("mos", help="opinion survey collection and report")
    mos_sub = p.add_subparsers(dest="mos_cmd", required=True)
    pa = mos_sub.add_parser("add")
    pa.add_argument("--survey", required=True)
    pa.add_argument("--clip", required=True)
    pa.add_argument("--participant", required=True)
    pa.add_argument("--answers", required=True,
                    help="comma-separated agree/disagree, three answers")
    pa.set_defaults(func=_cmd_mos)
    pr = mos_sub.add_parser("report")
    pr.add_argument("--survey", required=True)
    pr.set_defaults(func=_cmd_mos)

    p = sub.add_parser("speaker", help="speaker encoder tools")
    sp_sub = p.add_subparsers(dest="speaker_cmd", required=True)
    pt = sp_sub.add_parser("train")
    pt.add_argument("--out", required=True)
    pt.add_argument("--speakers", type=int, default=8)
    pt.add_argument("--utterances", type=int, default=10)
    pt.add_argument("--epochs", type=int, default=300)
    pt.add_argument("--seed", type=int, default=0)
    pt.set_defaults(func=_cmd_speaker)
    pe = sp_sub.add_parser("embed")
    pe.add_argument("--model", required=True)
    pe.add_argument("--wav", required=True)
    pe.add_argument("--out")
    pe.set_defaults(func=_cmd_speaker)
    pk = sp_sub.add_parser("rank")
    pk.add_argument("--model", required=True)
    pk.add_argument("--adult-wavs", nargs="+", required=True)
    pk.add_argument("--child-wavs", nargs="+", required=True)
    pk.set_defaults(func=_cmd_speaker)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, AudioFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
