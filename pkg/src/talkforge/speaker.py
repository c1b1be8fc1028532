"""Speaker embeddings: segmentation, encoder, GE2E loss, centroids, ranking.

The encoder is a deliberately small recurrent net over log-mel features whose
mean-pooled state is projected to a unit-norm vector. It is trained with the
generalized end-to-end loss: each utterance embedding is scored against every
speaker centroid (its own centroid excluding itself) through a learned affine
w*cos + b, and pushed toward its own speaker via a softmax objective.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import rnn
from .audio import AudioClip, FeatureConfig, FeatureSequence, features
from .errors import TrainingError, ValidationError

EMBED_DIM = 16
HIDDEN = 32
PARTIAL_WINDOW_S = 1.6
PARTIAL_HOP_S = 0.8


@dataclass(frozen=True)
class SpeakerEmbedding:
    """Unit-norm d-vector."""

    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        object.__setattr__(self, "vector", v)
        if not np.all(np.isfinite(v)):
            raise ValidationError("embedding must be finite")
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValidationError("embedding must be unit-norm")

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class GE2EParams:
    w: float = 10.0
    b: float = -5.0

    def __post_init__(self):
        if self.w <= 0:
            raise ValidationError("GE2E scale w must be positive")


@dataclass(frozen=True)
class EmbeddingBatch:
    """Embeddings indexed (speaker j, utterance i): shape (N, M, D)."""

    embeddings: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.embeddings, dtype=np.float64)
        object.__setattr__(self, "embeddings", e)
        if e.ndim != 3:
            raise ValidationError("batch must be (speakers, utterances, dim)")
        if e.shape[0] < 2 or e.shape[1] < 2:
            raise ValidationError("need >= 2 speakers and >= 2 utterances")
        norms = np.linalg.norm(e, axis=2)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValidationError("all embeddings must be unit-norm")


def cosine_similarity(a, b) -> float:
    va = a.vector if isinstance(a, SpeakerEmbedding) else np.asarray(a, dtype=np.float64)
    vb = b.vector if isinstance(b, SpeakerEmbedding) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValidationError("dimension mismatch")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na < 1e-12 or nb < 1e-12:
        raise ValidationError("cosine similarity of a zero vector is undefined")
    return float(np.dot(va, vb) / (na * nb))


def centroid(embeddings) -> SpeakerEmbedding:
    """Renormalized arithmetic mean of a set of embeddings."""
    vecs = [e.vector if isinstance(e, SpeakerEmbedding) else np.asarray(e)
            for e in embeddings]
    if not vecs:
        raise ValidationError("centroid of an empty set is undefined")
    mean = np.mean(vecs, axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        raise ValidationError("centroid undefined: mean is the zero vector")
    return SpeakerEmbedding(mean / norm)


def rank_adults(adult_embeddings: dict, child_centroid) -> list:
    """Sort speakers by cosine to the child centroid, descending; ties by name."""
    if not adult_embeddings:
        raise ValidationError("no adult embeddings to rank")
    scored = [(name, cosine_similarity(emb, child_centroid))
              for name, emb in adult_embeddings.items()]
    return sorted(scored, key=lambda item: (-item[1], item[0]))


# ---------------------------------------------------------------------------
# GE2E loss (forward + exact gradients)

def _ge2e_core(E: np.ndarray, w: float, b: float, want_grads: bool):
    N, M, D = E.shape
    csum = E.sum(axis=1)                       # (N, D)
    loss = 0.0
    dE = np.zeros_like(E) if want_grads else None
    dc_full = np.zeros((N, D)) if want_grads else None
    dw = 0.0
    db = 0.0

    c_full = csum / M
    for j in range(N):
        for i in range(M):
            e = E[j, i]
            cents = c_full.copy()
            cents[j] = (csum[j] - e) / (M - 1)
            ne = np.linalg.norm(e)
            ncent = np.linalg.norm(cents, axis=1)
            cos = cents @ e / np.maximum(ne * ncent, 1e-12)
            S = w * cos + b
            m = S.max()
            lse = m + np.log(np.sum(np.exp(S - m)))
            loss += -S[j] + lse
            if not want_grads:
                continue
            g = np.exp(S - lse)
            g[j] -= 1.0
            dw += float(g @ cos)
            db += float(g.sum())
            dcos = w * g
            # d cos / d e and d cos / d centroid for every k
            for k in range(N):
                Bv = cents[k]
                nb = ncent[k]
                denom = max(ne * nb, 1e-12)
                dcda = Bv / denom - cos[k] * e / max(ne * ne, 1e-12)
                dcdb = e / denom - cos[k] * Bv / max(nb * nb, 1e-12)
                dE[j, i] += dcos[k] * dcda
                if k == j:
                    # own centroid excludes e_ji: spread over the other M-1
                    contrib = dcos[k] * dcdb / (M - 1)
                    dE[j] += contrib
                    dE[j, i] -= contrib
                else:
                    dc_full[k] += dcos[k] * dcdb
    if want_grads:
        dE += dc_full[:, None, :] / M
        return loss, dE, dw, db
    return loss


def ge2e_loss(batch: EmbeddingBatch, params: GE2EParams) -> float:
    """Sum over utterances of -S(own) + logsumexp_k S(k)."""
    E = batch.embeddings
    if E.shape[1] < 2:
        raise ValidationError("GE2E needs >= 2 utterances per speaker")
    return float(_ge2e_core(E, params.w, params.b, want_grads=False))


def ge2e_loss_and_grads(E: np.ndarray, w: float, b: float):
    """Loss plus exact gradients w.r.t. raw embeddings, w and b."""
    return _ge2e_core(np.asarray(E, dtype=np.float64), w, b, want_grads=True)


# ---------------------------------------------------------------------------
# Partial-utterance segmentation

def segment_partials(clip: AudioClip, window_s: float = PARTIAL_WINDOW_S,
                     hop_s: float = PARTIAL_HOP_S,
                     config: FeatureConfig = FeatureConfig()) -> list:
    """Split a clip into fixed windows and return features for each."""
    dur = clip.duration_seconds
    if dur + 1e-9 < window_s:
        raise ValidationError(
            f"clip of {dur:.2f}s shorter than the {window_s}s partial window")
    win = int(round(window_s * clip.sample_rate))
    count = int(np.floor((dur - window_s) / hop_s + 1e-9)) + 1
    out = []
    for i in range(count):
        start = int(round(i * hop_s * clip.sample_rate))
        sub = AudioClip(clip.samples[start:start + win], clip.sample_rate)
        out.append(features(sub, config))
    return out


# ---------------------------------------------------------------------------
# Encoder model

@dataclass
class EncoderConfig:
    # defaults tuned on the 8x10 toy corpus
    dim: int = EMBED_DIM
    hidden: int = HIDDEN
    epochs: int = 300
    lr: float = 0.05
    clip_norm: float = 3.0
    w_init: float = 10.0
    b_init: float = -5.0
    w_floor: float = 1e-2
    window_s: float = PARTIAL_WINDOW_S
    hop_s: float = PARTIAL_HOP_S


@dataclass
class EncoderModel:
    params: rnn.RnnParams
    w: float
    b: float
    feat_mean: np.ndarray
    feat_std: np.ndarray
    config: EncoderConfig
    seed: int
    history: list = field(default_factory=list)

    @property
    def d_in(self) -> int:
        return self.params.Wx.shape[0]


def embed(model: EncoderModel, feats: FeatureSequence) -> SpeakerEmbedding:
    """Map one feature sequence to a unit-norm speaker embedding."""
    if feats.dim != model.d_in:
        raise ValidationError(
            f"feature dim {feats.dim} does not match model input {model.d_in}")
    X = ((feats.rows - model.feat_mean) / model.feat_std)[None, :, :]
    Hseq = rnn.forward_hidden(model.params, X)
    E, _ = rnn.head_pooled_normalized(model.params, Hseq)
    return SpeakerEmbedding(E[0])


def embed_utterance(model: EncoderModel, clip: AudioClip) -> SpeakerEmbedding:
    """Renormalized mean over the clip's partial-window embeddings."""
    parts = segment_partials(clip, model.config.window_s, model.config.hop_s)
    return centroid([embed(model, p) for p in parts])


def train_encoder(toy_corpus: dict, config: EncoderConfig = EncoderConfig(),
                  seed: int = 0) -> EncoderModel:
    """Full-batch gradient descent on the GE2E objective.

    ``toy_corpus`` maps speaker name -> list of AudioClip, all speakers with
    the same utterance count. One partial window per utterance is used as the
    training exemplar.
    """
    names = sorted(toy_corpus)
    if len(names) < 4:
        raise ValidationError("need >= 4 speakers to train")
    counts = {len(toy_corpus[n]) for n in names}
    if len(counts) != 1:
        raise ValidationError("all speakers need the same utterance count")
    M = counts.pop()
    if M < 4:
        raise ValidationError("need >= 4 utterances per speaker")
    N = len(names)

    rows = []
    for name in names:
        for clip in toy_corpus[name]:
            rows.append(segment_partials(clip, config.window_s, config.hop_s)[0].rows)
    X = np.stack(rows)                                  # (N*M, T, d)
    feat_mean = X.mean(axis=(0, 1))
    feat_std = np.maximum(X.std(axis=(0, 1)), 1e-6)
    X = (X - feat_mean) / feat_std

    rng = np.random.default_rng(seed)
    params = rnn.init_params(rng, X.shape[2], config.hidden, config.dim)
    w, b = config.w_init, config.b_init
    history = []

    for _epoch in range(config.epochs):
        Hseq = rnn.forward_hidden(params, X)
        E, cache = rnn.head_pooled_normalized(params, Hseq)
        loss, dE, dw, db = ge2e_loss_and_grads(E.reshape(N, M, -1), w, b)
        if not np.isfinite(loss):
            raise TrainingError("GE2E loss diverged (non-finite)")
        history.append(float(loss))
        head_grads, dH = rnn.backward_pooled_normalized(
            params, Hseq, cache, dE.reshape(N * M, -1))
        grads = rnn.backward_hidden(params, X, Hseq, dH)
        grads.update(head_grads)
        extra = [dw, db]
        rnn.clip_grads(grads, extra, config.clip_norm)
        rnn.apply_grads(params, grads, config.lr)
        w = max(w - config.lr * extra[0], config.w_floor)
        b = b - config.lr * extra[1]

    return EncoderModel(params, w, b, feat_mean, feat_std, config, seed, history)


def separation_score(model: EncoderModel, corpus: dict) -> float:
    """Mean same-speaker cosine minus mean cross-speaker cosine on partials."""
    per_speaker = []
    for name in sorted(corpus):
        embs = []
        for clip in corpus[name]:
            for part in segment_partials(clip, model.config.window_s, model.config.hop_s):
                embs.append(embed(model, part).vector)
        per_speaker.append(np.stack(embs))
    same, cross = [], []
    for a in range(len(per_speaker)):
        ea = per_speaker[a]
        sims = ea @ ea.T
        iu = np.triu_indices(len(ea), k=1)
        same.extend(sims[iu].tolist())
        for bdx in range(a + 1, len(per_speaker)):
            cross.extend((ea @ per_speaker[bdx].T).ravel().tolist())
    return float(np.mean(same) - np.mean(cross))


# ---------------------------------------------------------------------------
# Checkpoints

def save_encoder(model: EncoderModel, path) -> None:
    blob = {
        "kind": "speaker-encoder",
        "dim": model.config.dim,
        "hidden": model.config.hidden,
        "w": model.w,
        "b": model.b,
        "seed": model.seed,
        "config": vars(model.config),
        "feat_mean": model.feat_mean.tolist(),
        "feat_std": model.feat_std.tolist(),
        "params": rnn.params_to_jsonable(model.params),
        "history": model.history,
    }
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_encoder(path) -> EncoderModel:
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("kind") != "speaker-encoder":
        raise ValidationError(f"{path}: not a speaker-encoder checkpoint")
    config = EncoderConfig(**blob["config"])
    return EncoderModel(
        params=rnn.params_from_jsonable(blob["params"]),
        w=float(blob["w"]),
        b=float(blob["b"]),
        feat_mean=np.asarray(blob["feat_mean"]),
        feat_std=np.asarray(blob["feat_std"]),
        config=config,
        seed=int(blob["seed"]),
        history=list(blob.get("history", [])),
    )
