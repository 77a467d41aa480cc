"""Sliding-window count tables for the dynamic topic sampler.

Per-day tallies are kept per topic; a window query at day t sums days
max(1, t-ell)..t, so early windows are partial. All counts are int64 and
maintained incrementally; `recount`/`audit` rebuild them from scratch.
"""

from __future__ import annotations

import numpy as np

from .corpus import AuditError, PostArrays


class WindowCounts:
    """Per-day topic tallies with O(ell) window queries.

    day_posts[k, t]   posts assigned to topic k on day t
    day_totals[k, t]  tokens in those posts
    day_tokens[k, t, w]  occurrences of token w in those posts
    """

    def __init__(self, n_topics, horizon, vocab_size, ell):
        if ell < 1:
            raise ValueError(f"ell must be at least 1, got {ell}")
        self.n_topics = int(n_topics)
        self.horizon = int(horizon)
        self.vocab_size = int(vocab_size)
        self.ell = int(ell)
        self.day_posts = np.zeros((n_topics, horizon + 1), dtype=np.int64)
        self.day_totals = np.zeros((n_topics, horizon + 1), dtype=np.int64)
        self.day_tokens = np.zeros(
            (n_topics, horizon + 1, vocab_size), dtype=np.int64
        )

    def window_lo(self, t: int) -> int:
        return max(1, t - self.ell)

    def add_post(self, k, t, tok_idx, tok_cnt, n_tokens):
        self.day_posts[k, t] += 1
        self.day_totals[k, t] += n_tokens
        self.day_tokens[k, t, tok_idx] += tok_cnt

    def remove_post(self, k, t, tok_idx, tok_cnt, n_tokens):
        self.day_posts[k, t] -= 1
        self.day_totals[k, t] -= n_tokens
        self.day_tokens[k, t, tok_idx] -= tok_cnt
        if self.day_posts[k, t] < 0 or self.day_totals[k, t] < 0 or np.any(
            self.day_tokens[k, t, tok_idx] < 0
        ):
            raise AuditError(
                f"negative count after removing a post (topic {k}, day {t})"
            )

    def window(self, t: int):
        """(posts (K,), totals (K,), tokens (K, W)) summed over the window at t."""
        lo = self.window_lo(t)
        sl = slice(lo, t + 1)
        return (
            self.day_posts[:, sl].sum(axis=1),
            self.day_totals[:, sl].sum(axis=1),
            self.day_tokens[:, sl, :].sum(axis=1),
        )

    @classmethod
    def from_assignments(cls, arrays: PostArrays, z, n_topics, horizon,
                         vocab_size, ell) -> "WindowCounts":
        """Rebuild tables from scratch; z entries of -1 mean unassigned."""
        wc = cls(n_topics, horizon, vocab_size, ell)
        z = np.asarray(z)
        for d in range(len(arrays)):
            k = z[d]
            if k < 0:
                continue
            lo, hi = arrays.indptr[d], arrays.indptr[d + 1]
            wc.add_post(k, arrays.days[d], arrays.tok_idx[lo:hi],
                        arrays.tok_cnt[lo:hi], arrays.n_tokens[d])
        return wc

    def audit(self, arrays: PostArrays, z):
        """Compare incremental tables to a fresh recount; raise on mismatch."""
        fresh = WindowCounts.from_assignments(
            arrays, z, self.n_topics, self.horizon, self.vocab_size, self.ell
        )
        for name in ("day_posts", "day_totals", "day_tokens"):
            mine, ref = getattr(self, name), getattr(fresh, name)
            if not np.array_equal(mine, ref):
                bad = np.argwhere(mine != ref)
                head = bad[:5].tolist()
                raise AuditError(
                    f"incremental {name} diverged from recount at "
                    f"{len(bad)} cells, first {head}; "
                    f"got {mine[tuple(bad[0])]} expected {ref[tuple(bad[0])]}"
                )

    def equals(self, other: "WindowCounts") -> bool:
        return (
            np.array_equal(self.day_posts, other.day_posts)
            and np.array_equal(self.day_totals, other.day_totals)
            and np.array_equal(self.day_tokens, other.day_tokens)
        )
