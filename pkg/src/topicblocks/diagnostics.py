"""Post-hoc analysis: partition agreement, topic-count selection, token
timelines, and posterior summaries."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import replace

import numpy as np
from scipy.special import gammaln

from .corpus import Corpus, PostArrays, PosteriorDraws
from .windows import WindowCounts


class DegenerateMatrixError(ValueError):
    """Topic-token matrix unusable for the selection criterion."""


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index of two label sequences.

    Partitions with no disagreeing pairs (including the n=1 case) score 1.0.
    """
    labels_a, labels_b = list(labels_a), list(labels_b)
    if len(labels_a) != len(labels_b):
        raise ValueError(
            f"length mismatch: {len(labels_a)} vs {len(labels_b)}"
        )
    n = len(labels_a)
    if n == 0:
        raise ValueError("empty partitions")

    def comb2(x):
        return x * (x - 1) // 2

    together_both = sum(
        comb2(c) for c in Counter(zip(labels_a, labels_b)).values()
    )
    together_a = sum(comb2(c) for c in Counter(labels_a).values())
    together_b = sum(comb2(c) for c in Counter(labels_b).values())
    if together_a == together_both and together_b == together_both:
        return 1.0  # identical as partitions
    # single division over integer terms, so e.g. the 4-point checkerboard
    # comes out exactly -0.5
    total = comb2(n)
    num = 2 * (total * together_both - together_a * together_b)
    den = total * (together_a + together_b) - 2 * together_a * together_b
    return num / den


def ari_series(label_draws) -> np.ndarray:
    """ARI between consecutive draws of a label array (mixing diagnostic)."""
    label_draws = np.asarray(label_draws)
    return np.array([
        adjusted_rand_index(label_draws[g], label_draws[g + 1])
        for g in range(label_draws.shape[0] - 1)
    ])


def modal_labels(label_draws) -> np.ndarray:
    """Per-item most frequent label across draws; ties break to the lowest."""
    label_draws = np.asarray(label_draws, dtype=np.int64)
    n_items = label_draws.shape[1]
    out = np.empty(n_items, dtype=np.int64)
    for j in range(n_items):
        out[j] = np.argmax(np.bincount(label_draws[:, j]))
    return out


def map_assignments(draws: PosteriorDraws):
    """(modal z, modal b) across retained draws."""
    return modal_labels(draws.z), modal_labels(draws.b)


def credible_interval(x, level=0.95):
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(x, dtype=np.float64), [tail, 1.0 - tail])
    return float(lo), float(hi)


def summarize(draws: PosteriorDraws) -> list[dict]:
    """Posterior mean/sd/central-95% rows for every scalar parameter."""
    if draws.n_draws == 0:
        raise ValueError("no retained draws to summarize")
    rows = []

    def add(family, index, series):
        series = np.asarray(series, dtype=np.float64)
        sd = float(series.std(ddof=1)) if len(series) > 1 else 0.0
        lo, hi = credible_interval(series)
        rows.append({
            "family": family,
            "index": ",".join(str(i) for i in index),
            "mean": float(series.mean()),
            "sd": sd,
            "lo": lo,
            "hi": hi,
        })

    for p in range(draws.theta.shape[1]):
        add("theta", (p,), draws.theta[:, p])
    for k in range(draws.psi.shape[1]):
        add("psi", (k,), draws.psi[:, k])
    for i in range(draws.rho.shape[1]):
        add("rho", (i,), draws.rho[:, i])
    n_blogs, n_topics = draws.pi.shape[1:]
    for i in range(n_blogs):
        for k in range(n_topics):
            add("pi", (i, k), draws.pi[:, i, k])
    for k in range(draws.events.shape[1]):
        for t in range(1, draws.events.shape[2]):
            add("events", (k, t), draws.events[:, k, t])
    return rows


def _entry_posts(arrays: PostArrays) -> np.ndarray:
    """Post index owning each CSR token entry."""
    return np.repeat(np.arange(len(arrays)), np.diff(arrays.indptr))


def window_counts_at(arrays: PostArrays, z, n_topics, vocab_size, t, ell,
                     entry_posts=None):
    """(posts (K,), totals (K,), tokens (K, W)) for the window at day t."""
    z = np.asarray(z)
    lo = max(1, t - ell)
    sel = (arrays.days >= lo) & (arrays.days <= t)
    posts = np.bincount(z[sel], minlength=n_topics)
    totals = np.bincount(z[sel], weights=arrays.n_tokens[sel],
                         minlength=n_topics).astype(np.int64)
    tokens = np.zeros((n_topics, vocab_size), dtype=np.int64)
    if entry_posts is None:
        entry_posts = _entry_posts(arrays)
    emask = sel[entry_posts]
    np.add.at(tokens, (z[entry_posts[emask]], arrays.tok_idx[emask]),
              arrays.tok_cnt[emask])
    return posts, totals, tokens


def predictive_token_prob_from_counts(win_posts, win_totals, win_tokens,
                                      token, topic) -> float:
    """P(Z = topic | token in post) by Bayes' rule over window counts.

    Prior = topic's share of window posts; likelihood = raw window token
    frequency. NaN when the token is absent from every topic's window.
    """
    win_posts = np.asarray(win_posts, dtype=np.float64)
    win_totals = np.asarray(win_totals, dtype=np.float64)
    n_posts = win_posts.sum()
    if n_posts == 0:
        return float("nan")
    freq = np.zeros_like(win_posts)
    nz = win_totals > 0
    freq[nz] = np.asarray(win_tokens, dtype=np.float64)[nz, token] \
        / win_totals[nz]
    weights = freq * (win_posts / n_posts)
    denom = weights.sum()
    if denom == 0.0:
        return float("nan")
    return float(weights[topic] / denom)


def weighted_frequency_from_counts(win_posts, win_totals,
                                   win_tokens, topic) -> np.ndarray:
    """Weighted frequency proportion over the vocabulary for one topic.

    Each token's window frequency in `topic` is weighted by its predictive
    probability of that topic, then normalized to sum to 1. All-NaN when
    the topic's window is empty.
    """
    win_tokens = np.asarray(win_tokens, dtype=np.float64)
    vocab_size = win_tokens.shape[1]
    if np.asarray(win_totals)[topic] == 0:
        return np.full(vocab_size, np.nan)
    weights = np.array([
        predictive_token_prob_from_counts(win_posts, win_totals, win_tokens,
                                          w, topic)
        for w in range(vocab_size)
    ])
    freq = win_tokens[topic] / win_totals[topic]
    wf = np.where(np.isnan(weights) & (freq == 0.0), 0.0, weights * freq)
    total = np.nansum(wf)
    if total == 0.0 or np.isnan(total):
        return np.full(vocab_size, np.nan)
    return wf / total


def predictive_token_prob(corpus: Corpus, draws: PosteriorDraws, token,
                          topic, day, ell):
    """(mean, lo, hi, n_defined) of the per-draw predictive probability."""
    arrays = corpus.to_arrays()
    entry_posts = _entry_posts(arrays)
    vals = []
    for g in range(draws.n_draws):
        wp, wt, wk = window_counts_at(arrays, draws.z[g], draws.psi.shape[1],
                                      len(corpus.vocabulary), day, ell,
                                      entry_posts)
        vals.append(predictive_token_prob_from_counts(wp, wt, wk, token,
                                                      topic))
    return _band(vals)


def wf_series(corpus: Corpus, draws: PosteriorDraws, token, topic, days,
              ell) -> list[dict]:
    """Per-day weighted-frequency rows (mean and credible band) for a token."""
    arrays = corpus.to_arrays()
    entry_posts = _entry_posts(arrays)
    n_topics = draws.psi.shape[1]
    rows = []
    for t in days:
        vals = []
        for g in range(draws.n_draws):
            wp, wt, wk = window_counts_at(arrays, draws.z[g], n_topics,
                                          len(corpus.vocabulary), t, ell,
                                          entry_posts)
            vals.append(float(weighted_frequency_from_counts(
                wp, wt, wk, topic)[token]))
        mean, lo, hi, n_defined = _band(vals)
        rows.append({"day": t, "token": token, "mean": mean, "lo": lo,
                     "hi": hi, "n_defined": n_defined})
    return rows


def _band(vals):
    vals = np.asarray(vals, dtype=np.float64)
    ok = vals[~np.isnan(vals)]
    if len(ok) == 0:
        return float("nan"), float("nan"), float("nan"), 0
    lo, hi = credible_interval(ok)
    return float(ok.mean()), lo, hi, int(len(ok))


def selection_score(corpus: Corpus, z, n_topics, ell, beta) -> float:
    """Penalized fit score of one topic assignment, in nats per token.

    One-step-ahead scoring: each day's posts are scored under the sliding
    window estimator for the post's topic built from the preceding days
    only, so a day's token draws never inform their own prediction. Half
    the free parameter count (one token simplex per topic) times the log
    of the total token count is added to the negated log-likelihood.

    Too few topics pays the mixture-entropy cost on every post in a merged
    topic. Too many splits the window counts, and a thinner window is a
    strictly noisier estimate of the topic's drift mean, so the forecast
    worsens; the penalty settles exact ties (empty extra topics) downward.
    """
    arrays = corpus.to_arrays()
    z = np.asarray(z, dtype=np.int64)
    vocab_size = len(corpus.vocabulary)
    total_tokens = int(arrays.n_tokens.sum())
    if total_tokens == 0:
        raise DegenerateMatrixError(
            "no tokens in the corpus; the criterion needs text to score"
        )
    wc = WindowCounts.from_assignments(arrays, z, n_topics, corpus.horizon,
                                       vocab_size, ell)
    loglik = 0.0
    for t in range(1, corpus.horizon + 1):
        day_posts = np.flatnonzero(arrays.days == t)
        if len(day_posts) == 0:
            continue
        _, win_totals, win_tokens = wc.window(t - 1)
        for d in day_posts:
            k = int(z[d])
            lo, hi = arrays.indptr[d], arrays.indptr[d + 1]
            idx = arrays.tok_idx[lo:hi]
            cnt = arrays.tok_cnt[lo:hi]
            base = win_tokens[k, idx] + beta
            loglik += float(np.sum(gammaln(base + cnt) - gammaln(base)))
            tot = win_totals[k] + vocab_size * beta
            loglik -= float(gammaln(tot + int(arrays.n_tokens[d]))
                            - gammaln(tot))
    penalty = 0.5 * n_topics * (vocab_size - 1) * math.log(total_tokens)
    return (penalty - loglik) / total_tokens


def arun_criterion(corpus: Corpus, runs: dict, ell, beta):
    """Criterion value per fitted K and the argmin (ties to the lowest K).

    `runs` maps each K to the modal topic assignment from its fit; ell and
    beta are the window length and token smoothing those fits used.
    """
    if len(runs) < 2:
        raise ValueError("need fits for at least 2 values of K")
    values = {}
    for k in sorted(runs):
        values[k] = selection_score(corpus, runs[k], k, ell, beta)
    best = min(sorted(values), key=lambda k: values[k])
    return values, best


def select_topic_count(corpus: Corpus, adjacency, cfg, kmin, kmax, *,
                       restarts=3, text_only=True):
    """Fit a grid of topic counts and pick one by the selection criterion.

    Each K in [kmin, kmax] is fitted `restarts` times from distinct seeds
    and the restart with the lowest criterion value is kept — within one K
    the penalty term is constant, so this keeps the best-fitting
    assignment rather than a poor local mode (a bad fit at the true K
    reads as a merge and distorts the curve). The criterion curve over
    the kept fits then picks the argmin.

    Returns (criterion value per K, chosen K, kept assignment per K).
    """
    from .inference import run_sampler
    if restarts < 1:
        raise ValueError(f"restarts must be at least 1, got {restarts}")
    values, runs = {}, {}
    for k in range(kmin, kmax + 1):
        for r in range(restarts):
            cfg_k = replace(cfg, K=k, seed=cfg.seed * restarts + r)
            result = run_sampler(corpus, adjacency, cfg_k,
                                 text_only=text_only)
            z = modal_labels(result.draws.z)
            score = selection_score(corpus, z, k, cfg.ell, cfg.beta)
            if k not in values or score < values[k]:
                values[k], runs[k] = score, z
    best = min(sorted(values), key=lambda k: values[k])
    return values, best, runs
