"""Dynamic collapsed topic sampler (one topic per post, sliding window).

The per-topic score for a post d at day t, with d's counts already removed,
is  (m*_k + alpha) / (|D_win| - 1 + K alpha)
    * prod_w prod_{s=1}^{c_w} (N*_kw + beta + s - 1)
      / prod_{i=1}^{N_d} (N*_k + W beta + i - 1)
where m*, N*_kw, N*_k are window tallies over days max(1, t-ell)..t.
Topic draws multiply in per-blog augmentation weights xi before normalizing.

Two implementations: a log-space reference (`gsdmm_text_prob`, exact for any
post length) and a linear-space JIT kernel used by the sweeps, which rescales
by powers of two before underflow. Tests pin their equivalence.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import gammaln

from .corpus import AuditError, PostArrays
from .jit import njit
from .windows import WindowCounts


_TINY = 2.0 ** -900
_SCALE = 900


def augmentation_weights(lam) -> np.ndarray:
    """Normalize nonnegative rate rows lambda_{ki} into weights xi.

    Accepts (K,) or (I, K); rows summing to zero fall back to uniform with
    a warning (a blog with no mass anywhere carries no preference).
    """
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0):
        raise ValueError("augmentation rates must be nonnegative")
    one_d = lam.ndim == 1
    mat = lam[None, :] if one_d else lam
    sums = mat.sum(axis=1)
    dead = sums == 0.0
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} augmentation rows sum to zero; "
            "falling back to uniform weights"
        )
    out = np.empty_like(mat)
    k = mat.shape[1]
    out[dead] = 1.0 / k
    out[~dead] = mat[~dead] / sums[~dead, None]
    return out[0] if one_d else out


def gsdmm_text_prob(tok_idx, tok_cnt, n_tokens, win_posts, win_totals,
                    win_tokens, n_window_posts, alpha, beta) -> np.ndarray:
    """Log-scale unnormalized topic scores for one held-out post.

    Window tallies must already exclude the post; `n_window_posts` is the
    post count after exclusion (the |D_win| - 1 term).
    """
    win_posts = np.asarray(win_posts, dtype=np.int64)
    win_totals = np.asarray(win_totals, dtype=np.int64)
    win_tokens = np.asarray(win_tokens, dtype=np.int64)
    if (win_posts.min(initial=0) < 0 or win_totals.min(initial=0) < 0
            or win_tokens.min(initial=0) < 0):
        raise AuditError("negative window count passed to topic scorer")
    n_topics = win_posts.shape[0]
    vocab_size = win_tokens.shape[1]
    logp = np.empty(n_topics, dtype=np.float64)
    log_denom_prior = math.log(n_window_posts + n_topics * alpha)
    for k in range(n_topics):
        lp = math.log(win_posts[k] + alpha) - log_denom_prior
        for w, c in zip(tok_idx, tok_cnt):
            base = win_tokens[k, w] + beta
            lp += gammaln(base + c) - gammaln(base)
        tot = win_totals[k] + vocab_size * beta
        lp -= gammaln(tot + n_tokens) - gammaln(tot)
        logp[k] = lp
    return logp


def assign_topic_probs(tok_idx, tok_cnt, n_tokens, win_posts, win_totals,
                       win_tokens, n_window_posts, alpha, beta,
                       xi) -> np.ndarray:
    """Normalized topic probabilities: text score times augmentation weight."""
    logp = gsdmm_text_prob(tok_idx, tok_cnt, n_tokens, win_posts, win_totals,
                           win_tokens, n_window_posts, alpha, beta)
    xi = np.asarray(xi, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logp = logp + np.log(xi)
    m = logp.max()
    if not np.isfinite(m):  # all weights zero is a caller bug
        raise ValueError("no topic has positive probability")
    p = np.exp(logp - m)
    return p / p.sum()


def assign_topic(rng, wc: WindowCounts, t, tok_idx, tok_cnt, n_tokens,
                 alpha, beta, xi) -> int:
    """Draw a topic for an unassigned post and add its counts back under it."""
    win_posts, win_totals, win_tokens = wc.window(t)
    probs = assign_topic_probs(tok_idx, tok_cnt, n_tokens, win_posts,
                               win_totals, win_tokens, int(win_posts.sum()),
                               alpha, beta, xi)
    k = int(np.searchsorted(np.cumsum(probs), rng.random()))
    k = min(k, len(probs) - 1)
    wc.add_post(k, t, tok_idx, tok_cnt, n_tokens)
    return k


@njit(cache=True)
def _score_post(tok_idx, tok_cnt, win_posts, win_totals, win_tokens,
                xi_row, alpha, beta, vals, exps):
    """Linear-space per-topic scores as vals[k] * 2**exps[k] (constants dropped)."""
    n_topics = win_posts.shape[0]
    vocab_size = win_tokens.shape[1]
    for k in range(n_topics):
        val = (win_posts[k] + alpha) * xi_row[k]
        e = 0
        den0 = win_totals[k] + vocab_size * beta
        j = 0.0
        for ii in range(tok_idx.shape[0]):
            base = win_tokens[k, tok_idx[ii]] + beta
            for s in range(tok_cnt[ii]):
                val *= (base + s) / (den0 + j)
                j += 1.0
                if val < _TINY:
                    val = math.ldexp(val, _SCALE)
                    e -= _SCALE
        vals[k] = val
        exps[k] = e


@njit(cache=True)
def _sweep_day(z, post_ids, blogs, indptr, tok_idx, tok_cnt, n_tokens,
               win_posts, win_totals, win_tokens,
               day_posts_t, day_totals_t, day_tokens_t,
               xi, uniforms, alpha, beta, sweeps):
    """Resample topics for all posts of one day, updating counts in place.

    win_* are the summed window tallies at `day` (mutated alongside the
    per-day slices day_*_t so both stay current). Returns reassignments.
    """
    n_topics = win_posts.shape[0]
    vals = np.empty(n_topics, dtype=np.float64)
    exps = np.zeros(n_topics, dtype=np.int64)
    changed = 0
    u_at = 0
    for _ in range(sweeps):
        for p in range(post_ids.shape[0]):
            d = post_ids[p]
            lo, hi = indptr[d], indptr[d + 1]
            idx = tok_idx[lo:hi]
            cnt = tok_cnt[lo:hi]
            nt = n_tokens[d]
            k_old = z[d]
            if k_old >= 0:
                win_posts[k_old] -= 1
                win_totals[k_old] -= nt
                day_posts_t[k_old] -= 1
                day_totals_t[k_old] -= nt
                for ii in range(idx.shape[0]):
                    win_tokens[k_old, idx[ii]] -= cnt[ii]
                    day_tokens_t[k_old, idx[ii]] -= cnt[ii]
            _score_post(idx, cnt, win_posts, win_totals, win_tokens,
                        xi[blogs[d]], alpha, beta, vals, exps)
            e_max = exps[0]
            for k in range(1, n_topics):
                if exps[k] > e_max:
                    e_max = exps[k]
            total = 0.0
            for k in range(n_topics):
                vals[k] = math.ldexp(vals[k], int(exps[k] - e_max))
                total += vals[k]
            r = uniforms[u_at] * total
            u_at += 1
            k_new = n_topics - 1
            acc = 0.0
            for k in range(n_topics):
                acc += vals[k]
                if r < acc:
                    k_new = k
                    break
            win_posts[k_new] += 1
            win_totals[k_new] += nt
            day_posts_t[k_new] += 1
            day_totals_t[k_new] += nt
            for ii in range(idx.shape[0]):
                win_tokens[k_new, idx[ii]] += cnt[ii]
                day_tokens_t[k_new, idx[ii]] += cnt[ii]
            if k_new != k_old:
                changed += 1
            z[d] = k_new
    return changed


def sweep_day(arrays: PostArrays, wc: WindowCounts, z, t, post_ids, xi_mat,
              rng, alpha, beta, sweeps) -> int:
    """Run `sweeps` resampling passes over the posts of day t."""
    if len(post_ids) == 0 or sweeps == 0:
        return 0
    win_posts, win_totals, win_tokens = wc.window(t)
    uniforms = rng.random(sweeps * len(post_ids))
    return int(_sweep_day(
        z, post_ids, arrays.blogs, arrays.indptr, arrays.tok_idx,
        arrays.tok_cnt, arrays.n_tokens,
        win_posts, win_totals, win_tokens,
        wc.day_posts[:, t], wc.day_totals[:, t], wc.day_tokens[:, t, :],
        xi_mat, uniforms, alpha, beta, sweeps,
    ))


def gibbs_pass(arrays: PostArrays, wc: WindowCounts, z, by_day, xi_for_day,
               rng, alpha, beta, sweeps) -> int:
    """One full stage-1 pass: resample every day in chronological order.

    `xi_for_day(t)` supplies the (I, K) augmentation-weight matrix for day t.
    """
    changed = 0
    for t in range(1, wc.horizon + 1):
        post_ids = by_day[t]
        if len(post_ids) == 0:
            continue
        changed += sweep_day(arrays, wc, z, t, post_ids, xi_for_day(t), rng,
                             alpha, beta, sweeps)
    return changed


def init_assignments(arrays: PostArrays, wc: WindowCounts, z, by_day, rng,
                     alpha, beta, n_blogs) -> None:
    """Assign unassigned posts (z = -1) in one chronological pass.

    Uses uniform augmentation weights; counts accumulate as posts are
    assigned, mirroring an incremental restaurant-style initialization.
    """
    n_topics = wc.n_topics
    xi = np.full((n_blogs, n_topics), 1.0 / n_topics)
    for t in range(1, wc.horizon + 1):
        post_ids = by_day[t]
        if len(post_ids) == 0:
            continue
        sweep_day(arrays, wc, z, t, post_ids, xi, rng, alpha, beta, 1)
