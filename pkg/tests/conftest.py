import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from topicblocks.corpus import Corpus, Post, Vocabulary

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_corpus(post_specs, vocab_size, n_blogs, horizon):
    """post_specs: iterable of (blog, day, {token_id: count}, {links})."""
    vocab = Vocabulary(tuple(f"w{i}" for i in range(vocab_size)))
    posts = [
        Post(blog, day, dict(counts), frozenset(links))
        for blog, day, counts, links in post_specs
    ]
    return Corpus(posts, vocab, n_blogs, horizon)


@pytest.fixture
def small_corpus():
    return make_corpus(
        [
            (0, 1, {0: 2, 1: 1}, {1}),
            (1, 1, {2: 3}, set()),
            (0, 2, {1: 1, 3: 2}, {2}),
            (2, 3, {0: 1, 2: 1, 3: 1}, {0, 1}),
            (1, 3, {3: 4}, set()),
        ],
        vocab_size=4,
        n_blogs=3,
        horizon=4,
    )
