from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicblocks.corpus import AuditError
from topicblocks.gsdmm import (_score_post, assign_topic, assign_topic_probs,
                               augmentation_weights, gibbs_pass,
                               gsdmm_text_prob, init_assignments, sweep_day)
from topicblocks.windows import WindowCounts

from conftest import make_corpus


def oracle_probs(tok_idx, tok_cnt, win_posts, win_totals, win_tokens,
                 n_window_posts, alpha, beta, xi=None):
    """Closed-form collapsed predictive, exact rational arithmetic."""
    n_topics, vocab_size = win_tokens.shape
    alpha, beta = Fraction(alpha), Fraction(beta)
    xi = [Fraction(1, n_topics)] * n_topics if xi is None else \
        [Fraction(x) for x in xi]
    scores = []
    for k in range(n_topics):
        s = (Fraction(int(win_posts[k])) + alpha) \
            / (n_window_posts + n_topics * alpha)
        for w, c in zip(tok_idx, tok_cnt):
            base = Fraction(int(win_tokens[k, w])) + beta
            for i in range(int(c)):
                s *= base + i
        total = Fraction(int(win_totals[k])) + vocab_size * beta
        for i in range(int(sum(tok_cnt))):
            s /= total + i
        scores.append(s * xi[k])
    z = sum(scores)
    return np.array([float(s / z) for s in scores])


def tallies_from_posts(window_posts, n_topics, vocab_size):
    """(posts, totals, tokens) tables from (topic, {token: count}) pairs."""
    posts = np.zeros(n_topics, dtype=np.int64)
    totals = np.zeros(n_topics, dtype=np.int64)
    tokens = np.zeros((n_topics, vocab_size), dtype=np.int64)
    for k, counts in window_posts:
        posts[k] += 1
        for w, c in counts.items():
            totals[k] += c
            tokens[k, w] += c
    return posts, totals, tokens


def as_csr(counts):
    items = sorted(counts.items())
    idx = np.array([w for w, _ in items], dtype=np.int64)
    cnt = np.array([c for _, c in items], dtype=np.int64)
    return idx, cnt, int(cnt.sum())


post_counts_st = st.dictionaries(
    st.integers(0, 3), st.integers(1, 3), min_size=0, max_size=3)
window_st = st.lists(
    st.tuples(st.integers(0, 1), post_counts_st), min_size=0, max_size=5)


class TestOracleEquivalence:
    @given(window=window_st, held_out=post_counts_st,
           params=st.sampled_from([("0.1", "0.1"), ("0.5", "0.5"),
                                   ("1", "1"), ("0.1", "2")]))
    @settings(max_examples=200)
    def test_matches_exact_predictive(self, window, held_out, params):
        alpha_s, beta_s = params
        wp, wt, wk = tallies_from_posts(window, 2, 4)
        idx, cnt, n = as_csr(held_out)
        got = assign_topic_probs(idx, cnt, n, wp, wt, wk, len(window),
                                 float(Fraction(alpha_s)),
                                 float(Fraction(beta_s)),
                                 np.array([0.5, 0.5]))
        want = oracle_probs(idx, cnt, wp, wt, wk, len(window),
                            Fraction(alpha_s), Fraction(beta_s))
        rel = np.abs(got - want) / np.maximum(want, 1e-300)
        assert rel.max() < 1e-10

    def test_hand_value(self):
        # single-token vocabulary: the token-count ratio cancels exactly,
        # leaving p(k) = (m_k + alpha) / const; m = (0, 20), alpha = 1
        wp = np.array([0, 20])
        wt = np.array([0, 44])
        wk = np.array([[0], [44]])
        idx, cnt = np.array([0]), np.array([3])
        p = assign_topic_probs(idx, cnt, 3, wp, wt, wk, 20, 1.0, 0.7,
                               np.array([0.5, 0.5]))
        assert p[1] == pytest.approx(21.0 / 22.0, abs=1e-12)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_empty_window_is_symmetric(self):
        wp = np.zeros(2, dtype=np.int64)
        wt = np.zeros(2, dtype=np.int64)
        wk = np.zeros((2, 3), dtype=np.int64)
        idx, cnt = np.array([1]), np.array([2])
        p = assign_topic_probs(idx, cnt, 2, wp, wt, wk, 0, 0.3, 0.2,
                               np.array([0.5, 0.5]))
        assert p == pytest.approx([0.5, 0.5], abs=1e-15)

    def test_empty_post_scores_by_prior_only(self):
        wp = np.array([3, 1])
        wt = np.array([10, 2])
        wk = np.array([[10, 0], [0, 2]])
        idx = np.array([], dtype=np.int64)
        cnt = np.array([], dtype=np.int64)
        p = assign_topic_probs(idx, cnt, 0, wp, wt, wk, 4, 0.5, 0.1,
                               np.array([0.5, 0.5]))
        want = np.array([3.5, 1.5]) / 5.0
        assert p == pytest.approx(want, abs=1e-14)

    @given(window=window_st, held_out=post_counts_st)
    @settings(max_examples=100)
    def test_token_order_irrelevant(self, window, held_out):
        wp, wt, wk = tallies_from_posts(window, 2, 4)
        idx, cnt, n = as_csr(held_out)
        base = gsdmm_text_prob(idx, cnt, n, wp, wt, wk, len(window), 0.1, 0.1)
        perm = np.random.default_rng(1).permutation(len(idx))
        flipped = gsdmm_text_prob(idx[perm], cnt[perm], n, wp, wt, wk,
                                  len(window), 0.1, 0.1)
        assert base == pytest.approx(flipped, abs=1e-12)

    def test_negative_counts_raise(self):
        wp = np.array([1, -1])
        wt = np.zeros(2, dtype=np.int64)
        wk = np.zeros((2, 2), dtype=np.int64)
        with pytest.raises(AuditError):
            gsdmm_text_prob(np.array([0]), np.array([1]), 1, wp, wt, wk,
                            0, 0.1, 0.1)


class TestKernel:
    def kernel_probs(self, idx, cnt, wp, wt, wk, xi, alpha, beta):
        n_topics = len(wp)
        vals = np.empty(n_topics)
        exps = np.zeros(n_topics, dtype=np.int64)
        _score_post(idx, cnt, wp.astype(np.int64), wt.astype(np.int64),
                    wk.astype(np.int64), np.asarray(xi, dtype=np.float64),
                    alpha, beta, vals, exps)
        shifted = np.array([np.ldexp(v, int(e - exps.max()))
                            for v, e in zip(vals, exps)])
        return shifted / shifted.sum()

    @given(window=window_st, held_out=post_counts_st)
    @settings(max_examples=100)
    def test_kernel_matches_log_reference(self, window, held_out):
        wp, wt, wk = tallies_from_posts(window, 2, 4)
        idx, cnt, n = as_csr(held_out)
        xi = np.array([0.3, 0.7])
        got = self.kernel_probs(idx, cnt, wp, wt, wk, xi, 0.1, 0.1)
        want = assign_topic_probs(idx, cnt, n, wp, wt, wk, len(window),
                                  0.1, 0.1, xi)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_kernel_survives_long_posts(self):
        # hundreds of factors ~1e-3 each force the power-of-two rescaling
        vocab_size = 5
        wp = np.array([2, 3], dtype=np.int64)
        wt = np.array([900, 10], dtype=np.int64)
        wk = np.zeros((2, vocab_size), dtype=np.int64)
        wk[0] = 180
        wk[1, 0] = 10
        idx = np.arange(vocab_size, dtype=np.int64)
        cnt = np.full(vocab_size, 60, dtype=np.int64)
        n = int(cnt.sum())
        xi = np.array([0.5, 0.5])
        got = self.kernel_probs(idx, cnt, wp, wt, wk, xi, 0.1, 0.1)
        want = assign_topic_probs(idx, cnt, n, wp, wt, wk, 5, 0.1, 0.1, xi)
        assert np.all(got > 0)
        assert got == pytest.approx(want, rel=1e-8)


class TestAugmentationWeights:
    def test_rows_normalized(self, rng):
        lam = rng.gamma(1.0, 1.0, size=(5, 3))
        xi = augmentation_weights(lam)
        assert np.allclose(xi.sum(axis=1), 1.0)
        assert np.allclose(xi, lam / lam.sum(axis=1, keepdims=True))

    def test_vector_form(self):
        xi = augmentation_weights(np.array([1.0, 3.0]))
        assert xi == pytest.approx([0.25, 0.75])

    def test_zero_row_uniform_with_warning(self):
        lam = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 2.0]])
        with pytest.warns(UserWarning, match="uniform"):
            xi = augmentation_weights(lam)
        assert xi[0] == pytest.approx([1 / 3] * 3)
        assert xi[1] == pytest.approx([0.25, 0.25, 0.5])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            augmentation_weights(np.array([1.0, -0.1]))


class TestAssignTopic:
    def test_degenerate_weights_force_topic(self, rng):
        wc = WindowCounts(3, 4, 2, ell=2)
        idx, cnt = np.array([0]), np.array([2])
        k = assign_topic(rng, wc, 2, idx, cnt, 2, 0.1, 0.1,
                         np.array([0.0, 1.0, 0.0]))
        assert k == 1
        assert wc.day_posts[1, 2] == 1 and wc.day_tokens[1, 2, 0] == 2

    def test_counts_readded_after_draw(self, rng):
        wc = WindowCounts(2, 4, 3, ell=2)
        before = wc.day_posts.sum()
        assign_topic(rng, wc, 1, np.array([1, 2]), np.array([1, 1]), 2,
                     0.1, 0.1, np.array([0.5, 0.5]))
        assert wc.day_posts.sum() == before + 1
        assert wc.day_totals.sum() == 2


class TestSweeps:
    def _setup(self, rng, n_topics=3):
        specs = []
        for _ in range(50):
            counts = {int(w): int(rng.integers(1, 3))
                      for w in rng.choice(5, size=rng.integers(1, 4),
                                          replace=False)}
            specs.append((int(rng.integers(4)),
                          int(rng.integers(1, 8)), counts, set()))
        corpus = make_corpus(specs, 5, 4, 8)
        arrays = corpus.to_arrays()
        z = np.full(len(arrays), -1, dtype=np.int64)
        wc = WindowCounts(n_topics, 8, 5, ell=3)
        return corpus, arrays, z, wc

    def test_init_then_sweeps_stay_consistent(self, rng):
        corpus, arrays, z, wc = self._setup(rng)
        by_day = corpus.posts_by_day()
        init_assignments(arrays, wc, z, by_day, rng, 0.1, 0.1, 4)
        assert np.all(z >= 0)
        wc.audit(arrays, z)
        xi = np.full((4, 3), 1.0 / 3)
        for _ in range(5):
            gibbs_pass(arrays, wc, z, by_day, lambda t: xi, rng, 0.1, 0.1,
                       sweeps=2)
        wc.audit(arrays, z)

    def test_seed_determinism(self):
        rng1 = np.random.default_rng(42)
        corpus, arrays, z1, wc1 = self._setup(rng1)
        by_day = corpus.posts_by_day()
        init_assignments(arrays, wc1, z1, by_day,
                         np.random.default_rng(7), 0.1, 0.1, 4)
        z2 = np.full(len(arrays), -1, dtype=np.int64)
        wc2 = WindowCounts(3, 8, 5, ell=3)
        init_assignments(arrays, wc2, z2, by_day,
                         np.random.default_rng(7), 0.1, 0.1, 4)
        assert np.array_equal(z1, z2)
        assert wc1.equals(wc2)

    def test_sweep_day_returns_move_count(self, rng):
        corpus, arrays, z, wc = self._setup(rng)
        by_day = corpus.posts_by_day()
        init_assignments(arrays, wc, z, by_day, rng, 0.1, 0.1, 4)
        xi = np.full((4, 3), 1.0 / 3)
        t = next(t for t in range(1, 9) if len(by_day[t]) > 0)
        moved = sweep_day(arrays, wc, z, t, by_day[t], xi, rng, 0.1, 0.1,
                          sweeps=3)
        assert 0 <= moved <= 3 * len(by_day[t])
