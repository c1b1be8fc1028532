import pytest

from talkforge.animator import AnimatorConfig, train_animator
from talkforge.speaker import EncoderConfig, train_encoder
from talkforge.toydata import (make_animator_corpus, make_speaker_corpus,
                               split_corpus)

SEED = 0


@pytest.fixture(scope="session")
def speaker_corpus():
    corpus, _profiles = make_speaker_corpus(4, 4, 10, seed=SEED)
    return corpus


@pytest.fixture(scope="session")
def speaker_split(speaker_corpus):
    return split_corpus(speaker_corpus, holdout=2)


@pytest.fixture(scope="session")
def speaker_model(speaker_split):
    train, _held = speaker_split
    return train_encoder(train, EncoderConfig(), seed=SEED)


@pytest.fixture(scope="session")
def animator_corpus():
    examples, embeddings = make_animator_corpus(n_texts=8, seed=SEED)
    return examples, embeddings


@pytest.fixture(scope="session")
def animator_split(animator_corpus):
    examples, _ = animator_corpus
    # per speaker: 8 speech then 2 silence; hold out speech clips 6-7 of each
    train = examples[:6] + examples[8:16] + examples[18:20]
    held = examples[6:8] + examples[16:18]
    return train, held


@pytest.fixture(scope="session")
def animator_model(animator_split):
    train, _held = animator_split
    return train_animator(train, AnimatorConfig(), seed=SEED)
