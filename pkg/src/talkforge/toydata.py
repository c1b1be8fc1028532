"""Seeded toy corpora for training and evaluating the learned components."""
from __future__ import annotations

import hashlib

import numpy as np

from .animator import AnimatorExample, procedural_articulate
from .audio import AudioClip, features, rms_envelope
from .landmarks import OUTER_LIPS, INNER_LIPS, canonical_template
from .tts import adult_profile, child_profile, synthesize

TOY_TEXTS = (
    "the little bird sang over the quiet river",
    "we walk to town and look at yellow kites",
    "please bring a round stone from the garden",
    "my friend likes to draw blue boats at noon",
    "a warm wind moves the tall green grass now",
    "they read an old story before the long trip",
    "put the red apple near the open window",
    "someone plays a small drum in the bright hall",
    "the happy dog runs under the wooden table",
    "rain falls softly on the roof every night",
    "mother bakes sweet bread early in the morning",
    "five ducks swim across the calm silver lake",
)


def stable_seed(*parts) -> int:
    """Platform-independent 63-bit seed derived from the given parts."""
    payload = "\x1f".join(str(p) for p in parts).encode()
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


def spaced_profiles(maker, count: int, min_f0_gap_hz: float, seed: int,
                    tag: str, max_draws: int = 200) -> list:
    """Seeded profile draws, rejecting f0 collisions closer than the gap.

    Keeps the toy speakers acoustically distinguishable so a small encoder
    can separate them; deterministic given (seed, tag). If earlier draws box
    the next slot in, the best-spaced candidate seen within ``max_draws`` is
    accepted so the loop always terminates.
    """
    out = []
    k = 0
    while len(out) < count:
        best, best_gap = None, -1.0
        for _attempt in range(max_draws):
            profile = maker(stable_seed(seed, tag, k) % 100000)
            k += 1
            gap = min((abs(profile.f0_base - p.f0_base) for p in out),
                      default=float("inf"))
            if gap >= min_f0_gap_hz:
                best = profile
                break
            if gap > best_gap:
                best, best_gap = profile, gap
        out.append(best)
    return out


def make_speaker_corpus(n_adult: int = 4, n_child: int = 4, n_utterances: int = 10,
                        sample_rate: int = 16000, seed: int = 0):
    """Toy speakers with disjoint adult/child voice profiles.

    Returns (corpus, profiles): corpus maps speaker name -> list of AudioClip,
    profiles maps speaker name -> VoiceProfile.
    """
    corpus = {}
    profiles = {}
    for profile in (spaced_profiles(adult_profile, n_adult, 14.0, seed, "adult")
                    + spaced_profiles(child_profile, n_child, 26.0, seed, "child")):
        clips = []
        for u in range(n_utterances):
            text = TOY_TEXTS[u % len(TOY_TEXTS)]
            clips.append(synthesize(text, profile, sample_rate,
                                    seed=stable_seed(seed, profile.name, u)))
        corpus[profile.name] = clips
        profiles[profile.name] = profile
    return corpus, profiles


def split_corpus(corpus: dict, holdout: int = 2):
    """Last ``holdout`` utterances of each speaker become the held-out set."""
    train = {name: clips[:-holdout] for name, clips in corpus.items()}
    held = {name: clips[-holdout:] for name, clips in corpus.items()}
    return train, held


def childify_direction_score(model, corpus: dict, eval_seed: int = 99,
                             n_adults: int = 10, n_utterances: int = 3):
    """Fraction of fresh adult voices whose childified clips move toward the
    toy child centroid in embedding space.

    The centroid comes from the corpus's child speakers; evaluation adults are
    drawn independently of the training corpus.
    """
    from .speaker import centroid, cosine_similarity, embed_utterance
    from .voice import ChildifyParams, childify

    child_embs = [embed_utterance(model, clip)
                  for name, clips in corpus.items()
                  if name.startswith("child") for clip in clips]
    child_centroid = centroid(child_embs)
    improved = []
    for profile in spaced_profiles(adult_profile, n_adults, 5.0, eval_seed,
                                   "eval-adult"):
        before, after = [], []
        for u in range(n_utterances):
            clip = synthesize(TOY_TEXTS[u], profile, 16000,
                              seed=stable_seed(eval_seed, profile.name, u))
            kid = childify(clip, ChildifyParams())
            before.append(cosine_similarity(embed_utterance(model, clip),
                                            child_centroid))
            after.append(cosine_similarity(embed_utterance(model, kid),
                                           child_centroid))
        improved.append(float(np.mean(after)) > float(np.mean(before)))
    return sum(improved) / len(improved)


SILENCE_SECONDS = (1.8, 2.4)


def make_animator_corpus(n_texts: int = 8, fps: float = 25.0,
                         sample_rate: int = 16000, seed: int = 0,
                         style_offset: float = 0.02):
    """Two style-distinct toy speakers driving the procedural oracle.

    Each speaker gets a constant x-offset on all lip landmarks so the speaker
    embedding input is informative, plus two pure-silence clips anchoring the
    rest pose. Returns (examples, speaker_embeddings); per speaker the layout
    is n_texts speech examples followed by the silence examples.
    """
    template = canonical_template()
    emb_a = np.zeros(16)
    emb_a[0] = 1.0
    emb_b = np.zeros(16)
    emb_b[1] = 1.0
    speakers = [
        ("anim-a", child_profile(stable_seed(seed, "anim", 0) % 100000), emb_a, +style_offset),
        ("anim-b", child_profile(stable_seed(seed, "anim", 1) % 100000), emb_b, -style_offset),
    ]
    lips = OUTER_LIPS + INNER_LIPS
    examples = []
    for name, profile, emb, offset in speakers:
        clips = [synthesize(TOY_TEXTS[u % len(TOY_TEXTS)], profile, sample_rate,
                            seed=stable_seed(seed, name, u))
                 for u in range(n_texts)]
        clips += [AudioClip(np.zeros(int(d * sample_rate)), sample_rate)
                  for d in SILENCE_SECONDS]
        for clip in clips:
            feats = features(clip)
            env = rms_envelope(clip)
            seq = procedural_articulate(feats, env, template, fps)
            frames = seq.frames.copy()
            frames[:, lips, 0] += offset
            target = type(seq)(frames, seq.fps, seq.duration_s)
            examples.append(AnimatorExample(feats, emb, target, clip))
    embeddings = {name: emb for name, _p, emb, _o in speakers}
    return examples, embeddings
