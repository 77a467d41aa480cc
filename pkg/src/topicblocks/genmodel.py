"""Forward simulator of the generative process.

Latent state, sampled in order: per-day topic token distributions evolving
through a sliding-window mean of their own history; rare per-topic events
with post-rate boosts; blogs assigned to topic-interest blocks drawn from a
fixed catalog (all 1-, 2-, 3-subsets of topics plus the all-topics block);
per-blog interest vectors and posting rates; daily per-topic post counts and
token draws; daily directed links via a logistic model on history-dependent
covariates.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ModelConfig
from .corpus import AdjacencyTensor, Corpus, Post, Vocabulary

LAG_DAYS = 7  # reciprocation lookback for the lag covariate


def dirichlet_floor(rng, alpha, floor=1e-12) -> np.ndarray:
    """Dirichlet draw via normalized gammas; variates floored to avoid a
    degenerate all-zero vector at tiny concentrations."""
    g = rng.standard_gamma(np.asarray(alpha, dtype=np.float64))
    g = np.maximum(g, floor)
    return g / g.sum()


class BlockCatalog:
    """Ordered interest-set catalog: singletons, pairs, triples (each in
    lexicographic order), then the all-topics block, deduplicated for K <= 3.

    matrix[k, b] = 1 iff topic k is in block b's interest set.
    """

    def __init__(self, n_topics: int):
        if n_topics < 1:
            raise ValueError(f"need at least 1 topic, got {n_topics}")
        sets: list[frozenset[int]] = []
        seen = set()
        for size in (1, 2, 3):
            for combo in itertools.combinations(range(n_topics), size):
                s = frozenset(combo)
                if s not in seen:
                    seen.add(s)
                    sets.append(s)
        full = frozenset(range(n_topics))
        if full not in seen:
            sets.append(full)
        self.n_topics = n_topics
        self.sets = tuple(sets)
        self.matrix = np.zeros((n_topics, len(sets)), dtype=np.uint8)
        for b, s in enumerate(sets):
            for k in s:
                self.matrix[k, b] = 1
        self.sizes = self.matrix.sum(axis=0).astype(np.int64)
        self.all_topics_block = len(sets) - 1
        # topic -> block ids whose interest set contains it
        self.blocks_of_topic = [
            np.nonzero(self.matrix[k])[0] for k in range(n_topics)
        ]

    @property
    def n_blocks(self):
        return len(self.sets)

    def alpha_for(self, block: int, concentration: float) -> np.ndarray:
        """Interest-vector Dirichlet parameter: P inside the set, 1 outside."""
        a = np.ones(self.n_topics, dtype=np.float64)
        a[self.matrix[:, block] == 1] = concentration
        return a


def block_index(n_topics: int) -> BlockCatalog:
    return BlockCatalog(n_topics)


def sample_topic_chain(rng, n_topics, horizon, vocab_size, ell,
                       beta, start=None) -> np.ndarray:
    """Per-day token distributions V[k, t] (row 0 unused).

    Day 1 uses a symmetric concentration of beta per token, or the given
    `start` rows (K x V); afterwards the concentration is the mean of the
    previous min(ell, t-1) days' rows.
    """
    v = np.zeros((n_topics, horizon + 1, vocab_size), dtype=np.float64)
    if start is not None:
        v[:, 1] = np.asarray(start, dtype=np.float64)
    else:
        for k in range(n_topics):
            v[k, 1] = dirichlet_floor(rng, np.full(vocab_size, beta))
    for t in range(2, horizon + 1):
        lo = max(1, t - ell)
        for k in range(n_topics):
            a = v[k, lo:t].mean(axis=0)
            v[k, t] = dirichlet_floor(rng, a)
    return v


def sample_events(rng, eta, n_topics, horizon) -> np.ndarray:
    """Binary event indicators E[k, t], column 0 zero; eta per topic."""
    eta = np.broadcast_to(np.asarray(eta, dtype=np.float64), (n_topics,))
    e = np.zeros((n_topics, horizon + 1), dtype=np.uint8)
    for t in range(1, horizon + 1):
        e[:, t] = rng.random(n_topics) < eta
    return e


def sample_psi(rng, a_psi, b_psi, n_topics) -> np.ndarray:
    return rng.gamma(shape=a_psi, scale=1.0 / b_psi, size=n_topics)


def sample_rho(rng, a_rho, b_rho, n_blogs) -> np.ndarray:
    return rng.gamma(shape=a_rho, scale=1.0 / b_rho, size=n_blogs)


def sample_blocks(rng, catalog: BlockCatalog, n_blogs,
                  p_mode="uniform") -> np.ndarray:
    """Block labels; p_mode 'uniform' over blocks or 'category' (uniform over
    the four size categories, then uniform within the chosen category)."""
    nb = catalog.n_blocks
    if p_mode == "uniform":
        p = np.full(nb, 1.0 / nb)
    elif p_mode == "category":
        cats = [np.nonzero(catalog.sizes == s)[0] for s in (1, 2, 3)]
        cats.append(np.array([catalog.all_topics_block]))
        cats = [c for c in cats if len(c) > 0]
        p = np.zeros(nb)
        for c in cats:
            p[c] += 1.0 / (len(cats) * len(c))
        p /= p.sum()
    else:
        raise ConfigError(f"unknown p_mode {p_mode!r}")
    return rng.choice(nb, size=n_blogs, p=p)


def sample_interests(rng, catalog: BlockCatalog, blocks,
                     concentration) -> np.ndarray:
    """Interest vectors pi[i] ~ Dirichlet(P inside block set, 1 outside)."""
    n = len(blocks)
    pi = np.empty((n, catalog.n_topics), dtype=np.float64)
    for i, b in enumerate(blocks):
        pi[i] = dirichlet_floor(rng, catalog.alpha_for(b, concentration))
    return pi


def post_rate(rho_i, pi_ik, e_tk, psi_k) -> float:
    """Expected posts about one topic on one day for one blog."""
    return rho_i * pi_ik + rho_i * e_tk * psi_k


def rate_matrix(rho, pi, e_t, psi) -> np.ndarray:
    """lambda[i, k] for one day: rho_i * (pi_ik + E_tk psi_k)."""
    return rho[:, None] * (pi + e_t[None, :] * psi[None, :])


def sigmoid(x):
    """Overflow-safe logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def link_probability(theta, s) -> float:
    """Logistic link probability for one covariate vector."""
    return float(sigmoid(np.dot(np.asarray(theta), np.asarray(s))))


def block_similarity(blocks, pi) -> np.ndarray:
    """B[i, j]: 1 for same-block pairs, else dot of interest vectors."""
    sim = pi @ pi.T
    same = np.asarray(blocks)[:, None] == np.asarray(blocks)[None, :]
    sim[same] = 1.0
    return sim


def covariate_history(adj: np.ndarray):
    """History-only covariates per day from an adjacency array (T+1, I, I).

    Returns (lag7, indeg, outdeg): lag7[t, i, j] = 1 iff j linked to i in
    days t-7..t-1; indeg[t, j] and outdeg[t, i] are mean daily in/out degree
    over days 1..t-1 (zero at t=1).
    """
    horizon = adj.shape[0] - 1
    n = adj.shape[1]
    lag7 = np.zeros((horizon + 1, n, n), dtype=np.float64)
    indeg = np.zeros((horizon + 1, n), dtype=np.float64)
    outdeg = np.zeros((horizon + 1, n), dtype=np.float64)
    in_cum = np.zeros(n)
    out_cum = np.zeros(n)
    for t in range(1, horizon + 1):
        if t > 1:
            indeg[t] = in_cum / (t - 1)
            outdeg[t] = out_cum / (t - 1)
        lo = max(1, t - LAG_DAYS)
        if lo < t:
            recip = adj[lo:t].max(axis=0)  # recip[j, i] = any j->i link
            lag7[t] = recip.T
        in_cum += adj[t].sum(axis=0)
        out_cum += adj[t].sum(axis=1)
    return lag7, indeg, outdeg


def covariates(i, j, t, history, blocks, pi) -> np.ndarray:
    """Covariate vector for a potential link i -> j on day t.

    `history` is the adjacency array restricted to days before t (entries at
    day >= t are ignored by construction of the features).
    """
    if t < 1:
        raise ValueError(f"day {t} < 1")
    b_sim = 1.0 if blocks[i] == blocks[j] else float(np.dot(pi[i], pi[j]))
    lo = max(1, t - LAG_DAYS)
    lag = 1.0 if t > 1 and np.any(history[lo:t, j, i]) else 0.0
    if t == 1:
        ind = out = 0.0
    else:
        ind = float(history[1:t, :, j].sum()) / (t - 1)
        out = float(history[1:t, i, :].sum()) / (t - 1)
    return np.array([1.0, b_sim, lag, ind, out])


def day_logits(theta, b_sim, lag7_t, indeg_t, outdeg_t) -> np.ndarray:
    """Logit matrix for all ordered pairs on one day (diagonal meaningless)."""
    return (theta[0]
            + theta[1] * b_sim
            + theta[2] * lag7_t
            + theta[3] * indeg_t[None, :]
            + theta[4] * outdeg_t[:, None])


@dataclass
class SimulationResult:
    corpus: Corpus
    adjacency: AdjacencyTensor
    truth: dict


def simulate(cfg: ModelConfig, n_blogs, horizon, vocab_size, *, theta=None,
             psi=None, rho=None, pi=None, topics0=None, eta=None,
             p_mode="uniform", seed=None) -> SimulationResult:
    """Draw a complete synthetic dataset; fixed seed is bit-reproducible.

    theta/psi/rho/pi/eta default to draws from their priors (theta to
    zeros); pass arrays to pin them for recovery experiments. topics0 pins
    the day-1 token distributions (K x V) that the drift starts from.
    """
    if cfg.lambda_D <= 0:
        raise ConfigError(f"lambda_D must be positive, got {cfg.lambda_D}")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    n_topics = cfg.K
    catalog = BlockCatalog(n_topics)
    v = sample_topic_chain(rng, n_topics, horizon, vocab_size, cfg.ell,
                           cfg.beta, start=topics0)
    if eta is None:
        eta = cfg.eta_for(n_topics)
    events = sample_events(rng, eta, n_topics, horizon)
    psi = (sample_psi(rng, cfg.a_psi, cfg.b_psi, n_topics) if psi is None
           else np.asarray(psi, dtype=np.float64))
    rho = (sample_rho(rng, cfg.a_rho, cfg.b_rho, n_blogs) if rho is None
           else np.asarray(rho, dtype=np.float64))
    blocks = sample_blocks(rng, catalog, n_blogs, p_mode)
    if pi is None:
        pi = sample_interests(rng, catalog, blocks, cfg.P)
    else:
        pi = np.broadcast_to(
            np.asarray(pi, dtype=np.float64),
            (n_blogs, n_topics)).copy()
    theta = (np.zeros(5) if theta is None
             else np.asarray(theta, dtype=np.float64))

    vocab = Vocabulary(tuple(f"w{w}" for w in range(vocab_size)))
    posts = []
    z_truth = []
    adj = np.zeros((horizon + 1, n_blogs, n_blogs), dtype=np.uint8)
    b_sim = block_similarity(blocks, pi)
    eye = np.eye(n_blogs, dtype=bool)
    in_cum = np.zeros(n_blogs)
    out_cum = np.zeros(n_blogs)
    for t in range(1, horizon + 1):
        lam = rate_matrix(rho, pi, events[:, t].astype(np.float64), psi)
        counts = rng.poisson(lam)  # (I, K)
        for i in range(n_blogs):
            for k in range(n_topics):
                for _ in range(counts[i, k]):
                    n_tok = rng.poisson(cfg.lambda_D)
                    tc = {}
                    if n_tok > 0:
                        draw = rng.multinomial(n_tok, v[k, t])
                        ws = np.nonzero(draw)[0]
                        tc = {int(w): int(draw[w]) for w in ws}
                    posts.append(Post(i, t, tc))
                    z_truth.append(k)
        if t == 1:
            indeg_t = np.zeros(n_blogs)
            outdeg_t = np.zeros(n_blogs)
        else:
            indeg_t = in_cum / (t - 1)
            outdeg_t = out_cum / (t - 1)
        lo = max(1, t - LAG_DAYS)
        lag7_t = adj[lo:t].max(axis=0).T if lo < t else np.zeros(
            (n_blogs, n_blogs))
        p = sigmoid(day_logits(theta, b_sim, lag7_t, indeg_t, outdeg_t))
        links = (rng.random((n_blogs, n_blogs)) < p) & ~eye
        adj[t] = links
        in_cum += adj[t].sum(axis=0)
        out_cum += adj[t].sum(axis=1)

    corpus = Corpus(posts, vocab, n_blogs, horizon)
    truth = {
        "z": [int(k) for k in z_truth],
        "b": [int(b) for b in blocks],
        "pi": pi.tolist(),
        "rho": rho.tolist(),
        "E": events.tolist(),
        "psi": psi.tolist(),
        "theta": theta.tolist(),
    }
    return SimulationResult(corpus, AdjacencyTensor(adj), truth)


def save_truth(truth: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_truth(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
