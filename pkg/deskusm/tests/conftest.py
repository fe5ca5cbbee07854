import numpy as np
import pytest

from encoder import ConformerConfig
from pipeline import SynthSpec, synth_corpus
from utils import clear_cache


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_conformer():
    return ConformerConfig(num_layers=2, model_dim=8, attention_heads=2, conv_kernel_size=3, relative_cap=4)


@pytest.fixture(scope="session")
def tiny_spec():
    return SynthSpec(
        graphemes=" abcd",
        languages=("xa", "xb"),
        train_clips=6,
        eval_clips=3,
        unlabeled_clips=4,
        text_sentences=10,
        lexicon_size=6,
        max_word_length=2,
        max_words=2,
        max_seconds=1.0,
        longform_factor=3,
    )


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory, tiny_spec):
    out = tmp_path_factory.mktemp("corpus")
    synth_corpus(tiny_spec, out, seed=3)
    return out


@pytest.fixture(autouse=True)
def _fresh_feature_cache():
    clear_cache()
    yield
    clear_cache()
