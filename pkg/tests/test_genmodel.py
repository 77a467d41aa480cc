import math

import numpy as np
import pytest

from topicblocks.config import ConfigError, ModelConfig
from topicblocks.genmodel import (BlockCatalog, block_index,
                                  block_similarity, covariate_history,
                                  covariates, day_logits, dirichlet_floor,
                                  link_probability, load_truth, post_rate,
                                  rate_matrix, sample_blocks, sample_events,
                                  sample_interests, sample_psi, sample_rho,
                                  sample_topic_chain, save_truth, sigmoid,
                                  simulate)


def cfg_for(**kw):
    from dataclasses import replace
    return replace(ModelConfig(), **kw)


class TestBlockCatalog:
    @pytest.mark.parametrize("k,expected", [
        (1, 1),            # {0} == all-topics, deduplicated
        (2, 3),            # {0}, {1}, {0,1}
        (3, 7),            # 3 + 3 + 1
        (4, 15),           # 4 + 6 + 4 + 1
        (22, 1794),        # 22 + 231 + 1540 + 1
    ])
    def test_block_counts(self, k, expected):
        assert block_index(k).n_blocks == expected

    def test_columns_distinct(self):
        cat = block_index(6)
        cols = {tuple(cat.matrix[:, b]) for b in range(cat.n_blocks)}
        assert len(cols) == cat.n_blocks

    def test_column_sums(self):
        cat = block_index(7)
        sums = sorted(set(cat.sizes.tolist()))
        assert sums == [1, 2, 3, 7]
        assert cat.sizes[cat.all_topics_block] == 7

    def test_ordering(self):
        cat = block_index(3)
        assert cat.sets[0] == frozenset({0})
        assert cat.sets[3] == frozenset({0, 1})
        assert cat.sets[4] == frozenset({0, 2})
        assert cat.sets[-1] == frozenset({0, 1, 2})

    def test_alpha_for(self):
        cat = block_index(4)
        a = cat.alpha_for(cat.sets.index(frozenset({1, 3})), 50.0)
        assert a.tolist() == [1.0, 50.0, 1.0, 50.0]

    def test_blocks_of_topic(self):
        cat = block_index(3)
        for k in range(3):
            for b in cat.blocks_of_topic[k]:
                assert k in cat.sets[b]
        # every topic is in the all-topics block
        assert all(cat.all_topics_block in cat.blocks_of_topic[k]
                   for k in range(3))

    def test_needs_topic(self):
        with pytest.raises(ValueError):
            BlockCatalog(0)


class TestTopicChain:
    def test_rows_on_simplex(self, rng):
        v = sample_topic_chain(rng, 3, 10, 6, ell=4, beta=0.1)
        assert v.shape == (3, 11, 6)
        assert np.all(v[:, 0] == 0)  # day 0 unused
        sums = v[:, 1:].sum(axis=2)
        assert np.allclose(sums, 1.0)
        assert np.all(v[:, 1:] >= 0)

    def test_smoothing_window(self, rng):
        # with a huge concentration scale the chain barely moves; with ell=1
        # each day conditions only on the previous one
        v = sample_topic_chain(rng, 1, 5, 4, ell=1, beta=0.1)
        assert v.shape == (1, 6, 4)

    def test_seed_determinism(self):
        a = sample_topic_chain(np.random.default_rng(3), 2, 8, 5, 3, 0.1)
        b = sample_topic_chain(np.random.default_rng(3), 2, 8, 5, 3, 0.1)
        assert np.array_equal(a, b)


class TestDirichletFloor:
    def test_simplex(self, rng):
        x = dirichlet_floor(rng, np.full(5, 0.01))
        assert x.sum() == pytest.approx(1.0)
        assert np.all(x > 0)

    def test_tiny_concentration_never_degenerate(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = dirichlet_floor(rng, np.full(3, 1e-8))
            assert np.isfinite(x).all() and x.sum() > 0

    def test_interest_mean(self, rng):
        # blog in block {0} of 3 topics: Dir(P, 1, 1), E[pi_0] = P/(P+2)
        cat = block_index(3)
        draws = np.array([
            dirichlet_floor(rng, cat.alpha_for(0, 100.0))
            for _ in range(20000)
        ])
        assert draws[:, 0].mean() == pytest.approx(100.0 / 102.0, abs=5e-4)


class TestEventsAndRates:
    def test_event_frequency(self, rng):
        e = sample_events(rng, 0.3, 4, 2000)
        assert np.all(e[:, 0] == 0)
        assert e[:, 1:].mean() == pytest.approx(0.3, abs=0.02)

    def test_event_eta_per_topic(self, rng):
        e = sample_events(rng, np.array([0.0, 1.0]), 2, 50)
        assert e[0].sum() == 0
        assert e[1, 1:].sum() == 50

    def test_gamma_means(self, rng):
        psi = sample_psi(rng, 1.0, 2.0, 40000)
        rho = sample_rho(rng, 4.0, 1.0, 40000)
        assert psi.mean() == pytest.approx(0.5, rel=0.03)
        assert rho.mean() == pytest.approx(4.0, rel=0.03)

    def test_post_rate_values(self):
        assert post_rate(2.0, 0.3, 0, 5.0) == pytest.approx(0.6)
        assert post_rate(2.0, 0.3, 1, 5.0) == pytest.approx(10.6)

    def test_rate_matrix_matches_scalar(self, rng):
        rho = rng.gamma(1, 1, 3)
        pi = rng.dirichlet(np.ones(2), 3)
        psi = rng.gamma(1, 1, 2)
        e_t = np.array([0.0, 1.0])
        lam = rate_matrix(rho, pi, e_t, psi)
        for i in range(3):
            for k in range(2):
                assert lam[i, k] == pytest.approx(
                    post_rate(rho[i], pi[i, k], e_t[k], psi[k]))


class TestBlockSampling:
    def test_uniform_support(self, rng):
        cat = block_index(3)
        b = sample_blocks(rng, cat, 5000, "uniform")
        assert set(np.unique(b)) == set(range(cat.n_blocks))

    def test_category_mode_balances_sizes(self, rng):
        cat = block_index(4)  # 4 singles, 6 pairs, 4 triples, 1 full
        b = sample_blocks(rng, cat, 40000, "category")
        sizes = cat.sizes[b]
        freq = [np.mean(sizes == s) for s in (1, 2, 3, 4)]
        assert freq == pytest.approx([0.25] * 4, abs=0.01)

    def test_unknown_mode(self, rng):
        with pytest.raises(ConfigError):
            sample_blocks(rng, block_index(2), 3, "zipf")

    def test_interests_concentrate_in_block(self, rng):
        cat = block_index(4)
        blocks = np.array([0, 5])  # {0} and some pair
        pi = sample_interests(rng, cat, blocks, 50.0)
        assert pi.shape == (2, 4)
        assert pi[0, 0] > 0.5  # P=50 vs 1 elsewhere


class TestLinkModel:
    def test_sigmoid_center_and_tails(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(800.0) == 1.0  # no overflow
        assert sigmoid(-800.0) == 0.0
        assert sigmoid(np.array([0.0, -1.0])).shape == (2,)

    def test_logit_roundtrip(self, rng):
        x = rng.uniform(-8, 8, 1000)
        p = sigmoid(x)
        back = np.log(p) - np.log1p(-p)
        assert back == pytest.approx(x, abs=1e-12)

    def test_logit_roundtrip_wide_range(self, rng):
        # recovery error grows like eps / (p (1-p)); scale tolerance by it
        x = rng.uniform(-30, 30, 1000)
        p = sigmoid(x)
        back = np.log(p) - np.log1p(-p)
        tol = 1e-12 + 1e-15 / (p * (1.0 - p))
        assert np.all(np.abs(back - x) <= tol)

    def test_link_probability_zero_logit(self):
        assert link_probability(np.zeros(5), np.ones(5)) == 0.5
        assert link_probability([1, 1, 0, 0, 0],
                                [1, -1, 5, 5, 5]) == 0.5

    def test_paper_scale_probability(self):
        # strongly negative intercept plus a same-block bonus
        theta = [-8.524, 1.058, -0.163, 0.497, 0.330]
        p = link_probability(theta, [1, 1, 0, 0, 0])
        assert p == pytest.approx(5.72e-4, abs=1e-6)

    def test_block_similarity(self, rng):
        pi = rng.dirichlet(np.ones(3), 4)
        blocks = np.array([0, 0, 1, 2])
        sim = block_similarity(blocks, pi)
        assert sim[0, 1] == 1.0 and sim[1, 0] == 1.0
        assert sim[0, 2] == pytest.approx(float(pi[0] @ pi[2]))
        assert np.allclose(sim, sim.T)
        assert np.all(np.diag(sim) == 1.0)


class TestCovariates:
    def _random_adj(self, rng, horizon=12, n=5, p=0.2):
        a = (rng.random((horizon + 1, n, n)) < p).astype(np.uint8)
        a[0] = 0
        for t in range(horizon + 1):
            np.fill_diagonal(a[t], 0)
        return a

    def test_day_one_is_memoryless(self, rng):
        adj = self._random_adj(rng)
        blocks = np.array([0, 0, 1, 1, 2])
        pi = rng.dirichlet(np.ones(3), 5)
        s = covariates(0, 1, 1, adj, blocks, pi)
        assert s[0] == 1.0 and s[1] == 1.0
        assert s[2] == 0.0 and s[3] == 0.0 and s[4] == 0.0

    def test_scalar_matches_history_arrays(self, rng):
        adj = self._random_adj(rng)
        blocks = np.array([0, 1, 1, 2, 0])
        pi = rng.dirichlet(np.ones(3), 5)
        lag7, indeg, outdeg = covariate_history(adj)
        b_sim = block_similarity(blocks, pi)
        for t in (1, 2, 5, 8, 12):
            logits = day_logits(np.array([0.1, 0.2, -0.3, 0.4, 0.5]),
                                b_sim, lag7[t], indeg[t], outdeg[t])
            for i in range(5):
                for j in range(5):
                    if i == j:
                        continue
                    s = covariates(i, j, t, adj, blocks, pi)
                    assert lag7[t, i, j] == s[2]
                    assert indeg[t, j] == pytest.approx(s[3])
                    assert outdeg[t, i] == pytest.approx(s[4])
                    want = np.dot([0.1, 0.2, -0.3, 0.4, 0.5],
                                  [1.0, b_sim[i, j], s[2], s[3], s[4]])
                    assert logits[i, j] == pytest.approx(want)

    def test_lag_window_is_seven_days(self):
        n, horizon = 3, 20
        adj = np.zeros((horizon + 1, n, n), dtype=np.uint8)
        adj[5, 1, 0] = 1  # blog 1 -> blog 0 on day 5
        lag7, _, _ = covariate_history(adj)
        # covariate for 0 -> 1: did 1 link to 0 in the last 7 days?
        assert lag7[5, 0, 1] == 0.0  # same-day link not visible
        assert all(lag7[t, 0, 1] == 1.0 for t in range(6, 13))
        assert lag7[13, 0, 1] == 0.0  # day 5 fell out of 6..12
        assert np.all(lag7[:, 1, 0] == 0.0)

    def test_degree_covariates_average_past(self):
        n = 3
        adj = np.zeros((5, n, n), dtype=np.uint8)
        adj[1, 0, 1] = adj[1, 0, 2] = 1  # blog 0 sends 2 links on day 1
        adj[2, 1, 2] = 1
        _, indeg, outdeg = covariate_history(adj)
        assert outdeg[2, 0] == pytest.approx(2.0)       # 2 links / 1 day
        assert outdeg[3, 0] == pytest.approx(1.0)       # 2 links / 2 days
        assert indeg[3, 2] == pytest.approx(1.0)        # from 0 and 1
        assert indeg[1].sum() == 0.0


class TestSimulate:
    def test_determinism(self):
        cfg = cfg_for(K=3, ell=5, lambda_B=3.0, lambda_D=6.0)
        a = simulate(cfg, 6, 8, 12, seed=5)
        b = simulate(cfg, 6, 8, 12, seed=5)
        assert [p.token_counts for p in a.corpus.posts] == \
               [p.token_counts for p in b.corpus.posts]
        assert np.array_equal(a.adjacency.a, b.adjacency.a)
        assert a.truth == b.truth

    def test_shapes_and_ranges(self):
        cfg = cfg_for(K=3, ell=5, lambda_B=3.0, lambda_D=6.0)
        res = simulate(cfg, 6, 8, 12, seed=2)
        assert len(res.truth["z"]) == len(res.corpus.posts)
        assert len(res.truth["b"]) == 6
        assert np.array(res.truth["pi"]).shape == (6, 3)
        assert res.adjacency.a.shape == (9, 6, 6)
        assert all(1 <= p.day <= 8 for p in res.corpus.posts)
        assert all(0 <= k < 3 for k in res.truth["z"])

    def test_pinned_parameters_pass_through(self):
        cfg = cfg_for(K=2, ell=3)
        theta = np.array([-3.0, 1.0, 0.0, 0.0, 0.0])
        psi = np.array([0.4, 0.6])
        rho = np.full(4, 2.0)
        res = simulate(cfg, 4, 5, 8, theta=theta, psi=psi, rho=rho,
                       eta=0.2, seed=1)
        assert res.truth["theta"] == theta.tolist()
        assert res.truth["psi"] == psi.tolist()
        assert res.truth["rho"] == rho.tolist()

    def test_block_effect_on_links(self):
        # strong same-block bonus: same-block link rate should dominate
        cfg = cfg_for(K=2, ell=3)
        res = simulate(cfg, 20, 30, 8,
                       theta=np.array([-4.0, 4.0, 0.0, 0.0, 0.0]),
                       rho=np.full(20, 0.5), seed=3)
        b = np.array(res.truth["b"])
        same = b[:, None] == b[None, :]
        np.fill_diagonal(same, False)
        a = res.adjacency.a[1:]
        if same.any() and (~same).any():
            rate_same = a[:, same].mean()
            cross = ~same & ~np.eye(20, dtype=bool)
            rate_cross = a[:, cross].mean()
            assert rate_same > rate_cross

    def test_truth_roundtrip(self, tmp_path):
        cfg = cfg_for(K=2, ell=3)
        res = simulate(cfg, 3, 4, 6, seed=9)
        save_truth(res.truth, tmp_path / "truth.json")
        assert load_truth(tmp_path / "truth.json") == res.truth

    def test_mean_tokens_per_post(self):
        cfg = cfg_for(K=2, ell=3, lambda_D=9.0)
        res = simulate(cfg, 10, 20, 15, rho=np.full(10, 2.0), seed=4)
        lengths = [p.n_tokens for p in res.corpus.posts]
        assert np.mean(lengths) == pytest.approx(9.0, rel=0.1)
