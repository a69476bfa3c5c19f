import numpy as np
import pytest

from chunkrec import ChunkTransducerModel, ModelConfig, Vocabulary


def make_tiny_model(seed=1, **overrides):
    kwargs = dict(d_model=16, n_heads=2, n_enc_blocks=1, n_dec_blocks=1, d_in=4,
                  left_context=4, W=3, B=1, vocab_size=8, ffn_inner=16, seed=seed)
    kwargs.update(overrides)
    cfg = ModelConfig(**kwargs)
    vocab = Vocabulary.from_units([f"s{i}" for i in range(cfg.vocab_size - 2)])
    return ChunkTransducerModel(cfg, vocab)


@pytest.fixture
def tiny_model():
    return make_tiny_model()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
