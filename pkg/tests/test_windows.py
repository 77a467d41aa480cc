import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicblocks.corpus import AuditError
from topicblocks.windows import WindowCounts

from conftest import make_corpus


def _random_corpus(rng, n_posts=40, vocab_size=6, n_blogs=4, horizon=9):
    specs = []
    for _ in range(n_posts):
        n_tok = int(rng.integers(0, 5))
        counts = {}
        for _ in range(n_tok):
            w = int(rng.integers(vocab_size))
            counts[w] = counts.get(w, 0) + 1
        specs.append((int(rng.integers(n_blogs)),
                      int(rng.integers(1, horizon + 1)), counts, set()))
    return make_corpus(specs, vocab_size, n_blogs, horizon)


class TestBasics:
    def test_add_remove_inverse(self, rng):
        wc = WindowCounts(3, 5, 4, ell=2)
        idx = np.array([0, 2])
        cnt = np.array([2, 1])
        wc.add_post(1, 3, idx, cnt, 3)
        wc.add_post(1, 3, idx, cnt, 3)
        wc.remove_post(1, 3, idx, cnt, 3)
        assert wc.day_posts[1, 3] == 1
        assert wc.day_totals[1, 3] == 3
        assert wc.day_tokens[1, 3, 0] == 2 and wc.day_tokens[1, 3, 2] == 1
        wc.remove_post(1, 3, idx, cnt, 3)
        assert wc.day_posts.sum() == 0 and wc.day_tokens.sum() == 0

    def test_remove_below_zero_raises(self):
        wc = WindowCounts(2, 3, 2, ell=1)
        with pytest.raises(AuditError, match="negative count"):
            wc.remove_post(0, 1, np.array([0]), np.array([1]), 1)

    def test_ell_must_be_positive(self):
        with pytest.raises(ValueError):
            WindowCounts(2, 3, 2, ell=0)

    def test_window_bounds(self):
        wc = WindowCounts(1, 10, 1, ell=3)
        assert wc.window_lo(1) == 1
        assert wc.window_lo(3) == 1
        assert wc.window_lo(4) == 1
        assert wc.window_lo(5) == 2
        assert wc.window_lo(10) == 7

    def test_window_sums_only_window_days(self):
        wc = WindowCounts(2, 10, 3, ell=2)
        for t in (1, 4, 5, 6, 7, 9):
            wc.add_post(0, t, np.array([1]), np.array([2]), 2)
        posts, totals, tokens = wc.window(6)  # days 4..6
        assert posts[0] == 3 and posts[1] == 0
        assert totals[0] == 6
        assert tokens[0, 1] == 6 and tokens.sum() == 6
        posts, _, _ = wc.window(2)  # days 1..2, partial early window
        assert posts[0] == 1


class TestRecount:
    def test_from_assignments_skips_unassigned(self, rng):
        corpus = _random_corpus(rng)
        arrays = corpus.to_arrays()
        z = rng.integers(0, 3, len(arrays))
        z[::5] = -1
        wc = WindowCounts.from_assignments(arrays, z, 3, corpus.horizon,
                                           6, ell=4)
        assert wc.day_posts.sum() == np.sum(z >= 0)

    def test_random_ops_match_recount(self, rng):
        corpus = _random_corpus(rng, n_posts=60)
        arrays = corpus.to_arrays()
        n_topics = 3
        z = np.full(len(arrays), -1, dtype=np.int64)
        wc = WindowCounts(n_topics, corpus.horizon, 6, ell=3)
        for _ in range(2000):
            d = int(rng.integers(len(arrays)))
            lo, hi = arrays.indptr[d], arrays.indptr[d + 1]
            idx, cnt = arrays.tok_idx[lo:hi], arrays.tok_cnt[lo:hi]
            if z[d] >= 0:
                wc.remove_post(z[d], arrays.days[d], idx, cnt,
                               arrays.n_tokens[d])
                z[d] = -1
            else:
                k = int(rng.integers(n_topics))
                wc.add_post(k, arrays.days[d], idx, cnt, arrays.n_tokens[d])
                z[d] = k
        wc.audit(arrays, z)  # raises on any divergence
        fresh = WindowCounts.from_assignments(arrays, z, n_topics,
                                              corpus.horizon, 6, ell=3)
        assert wc.equals(fresh)

    def test_audit_detects_corruption(self, rng):
        corpus = _random_corpus(rng)
        arrays = corpus.to_arrays()
        z = rng.integers(0, 2, len(arrays))
        wc = WindowCounts.from_assignments(arrays, z, 2, corpus.horizon,
                                           6, ell=3)
        wc.day_tokens[1, 2, 3] += 1
        with pytest.raises(AuditError, match="day_tokens"):
            wc.audit(arrays, z)

    @given(st.lists(
        st.tuples(st.integers(0, 2), st.integers(1, 6), st.integers(0, 3),
                  st.integers(1, 3)),
        min_size=1, max_size=30))
    @settings(max_examples=50)
    def test_totals_always_consistent(self, ops):
        wc = WindowCounts(3, 6, 4, ell=2)
        for k, t, w, c in ops:
            wc.add_post(k, t, np.array([w]), np.array([c]), c)
        assert wc.day_totals.sum() == wc.day_tokens.sum()
        assert wc.day_posts.sum() == len(ops)
        for t in range(1, 7):
            posts, totals, tokens = wc.window(t)
            assert totals.sum() == tokens.sum()
            assert (posts >= 0).all()
