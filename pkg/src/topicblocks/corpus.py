"""Shared data model: vocabulary, posts, corpora, link tensors, posterior draws.

File formats:
  corpus   one post per line: day<TAB>blog<TAB>token:count,...<TAB>link,link,...
           (trailing fields may be empty; days are 1-based)
  vocab    one token per line, line number (0-based) = token id
  links    one directed edge per line: day<TAB>sender<TAB>receiver
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

N_THETA = 5  # intercept, block similarity, 7-day lag, receiver indegree, sender outdegree


class CorpusFormatError(ValueError):
    """Malformed corpus/vocab/link input; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class AuditError(RuntimeError):
    """Internal consistency check failed (incremental counts diverged)."""


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token <-> integer id mapping. Id = position in `tokens`."""

    tokens: tuple[str, ...]
    index: dict[str, int] = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(
                self, "index", {w: i for i, w in enumerate(self.tokens)}
            )
        if len(self.index) != len(self.tokens):
            raise CorpusFormatError("vocabulary contains duplicate tokens")
        for w in self.tokens:
            if not w or any(c in w for c in "\t\n,:"):
                raise CorpusFormatError(f"invalid vocabulary token {w!r}")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id(self, token: str) -> int:
        return self.index[token]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for w in self.tokens:
                fh.write(w + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.strip() for line in fh if line.strip()]
        return cls(tuple(tokens))


@dataclass(frozen=True)
class Post:
    """One document: counts over vocabulary ids, outgoing same-day links."""

    blog: int
    day: int
    token_counts: dict[int, int]
    out_links: frozenset[int] = frozenset()
    n_tokens: int = -1  # filled from token_counts when negative

    def __post_init__(self):
        if self.day < 1:
            raise CorpusFormatError(f"post day {self.day} < 1 (days are 1-based)")
        if any(c <= 0 for c in self.token_counts.values()):
            raise CorpusFormatError("token counts must be positive")
        if self.blog in self.out_links:
            raise CorpusFormatError(f"blog {self.blog} links to itself")
        total = sum(self.token_counts.values())
        if self.n_tokens < 0:
            object.__setattr__(self, "n_tokens", total)
        elif self.n_tokens != total:
            raise CorpusFormatError(
                f"n_tokens={self.n_tokens} != sum of counts {total}"
            )


class Corpus:
    """Post collection over a fixed horizon 1..T and blog set 0..I-1.

    daily_counts[t, i] = number of posts by blog i on day t (row 0 unused).
    Blogs that never post (but appear as link endpoints) are legal nodes.
    """

    def __init__(self, posts, vocabulary, n_blogs, horizon, blog_names=None):
        posts = tuple(posts)
        if horizon < 1:
            raise CorpusFormatError(f"horizon {horizon} < 1")
        if blog_names is None:
            blog_names = tuple(str(i) for i in range(n_blogs))
        if len(blog_names) != n_blogs:
            raise CorpusFormatError("blog_names length != n_blogs")
        for p in posts:
            if not (0 <= p.blog < n_blogs):
                raise CorpusFormatError(f"blog id {p.blog} out of range")
            if p.day > horizon:
                raise CorpusFormatError(f"post day {p.day} > horizon {horizon}")
            for w in p.token_counts:
                if not (0 <= w < len(vocabulary)):
                    raise CorpusFormatError(f"token id {w} out of vocabulary")
            for j in p.out_links:
                if not (0 <= j < n_blogs):
                    raise CorpusFormatError(f"link target {j} out of range")
        self.posts = posts
        self.vocabulary = vocabulary
        self.n_blogs = int(n_blogs)
        self.horizon = int(horizon)
        self.blog_names = tuple(blog_names)
        self.daily_counts = np.zeros((horizon + 1, n_blogs), dtype=np.int64)
        for p in posts:
            self.daily_counts[p.day, p.blog] += 1
        posting = {p.blog for p in posts}
        self.zero_post_blogs = frozenset(range(n_blogs)) - posting

    def __len__(self):
        return len(self.posts)

    def posts_by_day(self):
        """List of post-index arrays, entry t = posts on day t (entry 0 empty)."""
        by_day = [[] for _ in range(self.horizon + 1)]
        for d, p in enumerate(self.posts):
            by_day[p.day].append(d)
        return [np.asarray(ix, dtype=np.int64) for ix in by_day]

    def to_arrays(self) -> "PostArrays":
        n = len(self.posts)
        days = np.empty(n, dtype=np.int64)
        blogs = np.empty(n, dtype=np.int64)
        n_tokens = np.empty(n, dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        for d, p in enumerate(self.posts):
            days[d] = p.day
            blogs[d] = p.blog
            n_tokens[d] = p.n_tokens
            indptr[d + 1] = indptr[d] + len(p.token_counts)
        tok_idx = np.empty(indptr[-1], dtype=np.int64)
        tok_cnt = np.empty(indptr[-1], dtype=np.int64)
        for d, p in enumerate(self.posts):
            lo = indptr[d]
            for j, (w, c) in enumerate(sorted(p.token_counts.items())):
                tok_idx[lo + j] = w
                tok_cnt[lo + j] = c
        return PostArrays(days, blogs, n_tokens, indptr, tok_idx, tok_cnt)


@dataclass(frozen=True)
class PostArrays:
    """CSR view of a corpus for the samplers (token ids sorted within post)."""

    days: np.ndarray
    blogs: np.ndarray
    n_tokens: np.ndarray
    indptr: np.ndarray
    tok_idx: np.ndarray
    tok_cnt: np.ndarray

    def __len__(self):
        return len(self.days)


def save_corpus(corpus: Corpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus.posts:
            toks = ",".join(
                f"{corpus.vocabulary.tokens[w]}:{c}"
                for w, c in sorted(p.token_counts.items())
            )
            links = ",".join(sorted(corpus.blog_names[j] for j in p.out_links))
            fh.write(f"{p.day}\t{corpus.blog_names[p.blog]}\t{toks}\t{links}\n")


def load_corpus(path, vocabulary=None, horizon=None, n_blogs=None,
                blog_names=None) -> Corpus:
    """Parse a corpus file.

    Without `vocabulary`, tokens are assigned ids in first-seen order; unknown
    tokens are an error when a vocabulary is supplied. `blog_names` pins the
    name -> id mapping (required when links mention blogs that never post).
    """
    build_vocab = vocabulary is None
    tok_index = {} if build_vocab else vocabulary.index
    tok_list = []
    if blog_names is not None:
        blog_index = {b: i for i, b in enumerate(blog_names)}
        blog_list = list(blog_names)
        fixed_blogs = True
    else:
        blog_index, blog_list = {}, []
        fixed_blogs = False

    def blog_id(name, lineno):
        if name not in blog_index:
            if fixed_blogs:
                raise CorpusFormatError(f"unknown blog {name!r}", path, lineno)
            blog_index[name] = len(blog_list)
            blog_list.append(name)
        return blog_index[name]

    raw = []
    max_day = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise CorpusFormatError(
                    f"expected 4 tab-separated fields, got {len(parts)}",
                    path, lineno,
                )
            day_s, blog_s, toks_s, links_s = parts
            try:
                day = int(day_s)
            except ValueError:
                raise CorpusFormatError(f"bad day {day_s!r}", path, lineno)
            if day < 1:
                raise CorpusFormatError(f"day {day} < 1", path, lineno)
            max_day = max(max_day, day)
            counts = {}
            if toks_s:
                for item in toks_s.split(","):
                    tok, _, cnt_s = item.rpartition(":")
                    if not tok:
                        raise CorpusFormatError(
                            f"bad token:count item {item!r}", path, lineno
                        )
                    try:
                        cnt = int(cnt_s)
                    except ValueError:
                        raise CorpusFormatError(
                            f"bad count in {item!r}", path, lineno
                        )
                    if cnt <= 0:
                        raise CorpusFormatError(
                            f"count must be positive in {item!r}", path, lineno
                        )
                    if tok not in tok_index:
                        if not build_vocab:
                            raise CorpusFormatError(
                                f"token {tok!r} not in vocabulary", path, lineno
                            )
                        tok_index[tok] = len(tok_list)
                        tok_list.append(tok)
                    w = tok_index[tok]
                    counts[w] = counts.get(w, 0) + cnt
            blog = blog_id(blog_s, lineno)  # before links: first-seen order
            links = set()
            if links_s:
                for name in links_s.split(","):
                    links.add(blog_id(name, lineno))
            raw.append((day, blog, counts, links, lineno))

    if vocabulary is None:
        vocabulary = Vocabulary(tuple(tok_list))
    if horizon is None:
        horizon = max_day if max_day > 0 else 1
    if not fixed_blogs:
        blog_list = blog_list or ["0"]
    if n_blogs is None:
        n_blogs = len(blog_list)
    posts = []
    for day, blog, counts, links, lineno in raw:
        links.discard(blog)  # self-links are meaningless here
        try:
            posts.append(Post(blog, day, counts, frozenset(links)))
        except CorpusFormatError as e:
            raise CorpusFormatError(str(e), path, lineno)
    return Corpus(posts, vocabulary, n_blogs, horizon, tuple(blog_list))


class AdjacencyTensor:
    """Binary directed link snapshots a[t, i, j] (1 = i linked to j on day t).

    Row 0 is unused (days are 1-based); the diagonal is structurally zero.
    """

    def __init__(self, a: np.ndarray):
        a = np.asarray(a, dtype=np.uint8)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise CorpusFormatError(f"bad adjacency shape {a.shape}")
        if a.max(initial=0) > 1:
            raise CorpusFormatError("adjacency entries must be 0/1")
        for t in range(a.shape[0]):
            if np.any(np.diagonal(a[t])):
                raise CorpusFormatError(f"self-link on day {t}")
        self.a = a

    @property
    def horizon(self):
        return self.a.shape[0] - 1

    @property
    def n_blogs(self):
        return self.a.shape[1]

    def save(self, path, blog_names=None):
        if blog_names is None:
            blog_names = [str(i) for i in range(self.n_blogs)]
        with open(path, "w", encoding="utf-8") as fh:
            for t in range(1, self.a.shape[0]):
                senders, receivers = np.nonzero(self.a[t])
                for i, j in zip(senders, receivers):
                    fh.write(f"{t}\t{blog_names[i]}\t{blog_names[j]}\n")

    @classmethod
    def load(cls, path, blog_index, horizon) -> "AdjacencyTensor":
        n = len(blog_index)
        a = np.zeros((horizon + 1, n, n), dtype=np.uint8)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise CorpusFormatError(
                        f"expected 3 fields, got {len(parts)}", path, lineno
                    )
                try:
                    t = int(parts[0])
                except ValueError:
                    raise CorpusFormatError(f"bad day {parts[0]!r}", path, lineno)
                if not (1 <= t <= horizon):
                    raise CorpusFormatError(
                        f"day {t} outside 1..{horizon}", path, lineno
                    )
                try:
                    i = blog_index[parts[1]]
                    j = blog_index[parts[2]]
                except KeyError as e:
                    raise CorpusFormatError(f"unknown blog {e}", path, lineno)
                if i == j:
                    raise CorpusFormatError("self-link", path, lineno)
                a[t, i, j] = 1
        return cls(a)

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "AdjacencyTensor":
        a = np.zeros(
            (corpus.horizon + 1, corpus.n_blogs, corpus.n_blogs), dtype=np.uint8
        )
        for p in corpus.posts:
            for j in p.out_links:
                a[p.day, p.blog, j] = 1
        return cls(a)


class PosteriorDraws:
    """Retained sampler snapshots, first axis = draw index.

    z:      (n_draws, n_posts) topic per post
    b:      (n_draws, I)       block per blog
    pi:     (n_draws, I, K)    interest vectors (rows sum to 1)
    rho:    (n_draws, I)       posting rates
    events: (n_draws, K, T+1)  binary event indicators (column 0 zero)
    psi:    (n_draws, K)       event boosts
    theta:  (n_draws, 5)       link coefficients
    """

    FAMILIES = ("z", "b", "pi", "rho", "events", "psi", "theta")

    def __init__(self, z, b, pi, rho, events, psi, theta):
        self.z = np.asarray(z, dtype=np.int64)
        self.b = np.asarray(b, dtype=np.int64)
        self.pi = np.asarray(pi, dtype=np.float64)
        self.rho = np.asarray(rho, dtype=np.float64)
        self.events = np.asarray(events, dtype=np.uint8)
        self.psi = np.asarray(psi, dtype=np.float64)
        self.theta = np.asarray(theta, dtype=np.float64)
        self.validate()

    @property
    def n_draws(self):
        return self.z.shape[0]

    def validate(self):
        n = self.z.shape[0]
        for name in self.FAMILIES:
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise AuditError(f"draw count mismatch in {name}")
        if self.theta.shape[1] != N_THETA:
            raise AuditError(f"theta has {self.theta.shape[1]} coefficients")
        if not np.allclose(self.pi.sum(axis=2), 1.0, atol=1e-8):
            raise AuditError("interest vectors do not sum to 1")
        if np.any(self.pi < 0) or np.any(self.rho < 0) or np.any(self.psi < 0):
            raise AuditError("negative draw for a nonnegative parameter")
        if self.events.max(initial=0) > 1:
            raise AuditError("events must be binary")
        if self.events.shape[2] > 0 and np.any(self.events[:, :, 0]):
            raise AuditError("events column 0 (day 0) must be zero")

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        n, n_posts = self.z.shape
        _, n_blogs, n_topics = self.pi.shape
        meta = {
            "n_draws": int(n),
            "n_posts": int(n_posts),
            "n_blogs": int(n_blogs),
            "n_topics": int(n_topics),
            "horizon": int(self.events.shape[2] - 1),
        }
        with open(os.path.join(out_dir, "draws_meta.json"), "w") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")
        _write_long(out_dir, "z.csv", ("draw", "post", "topic"), self.z)
        _write_long(out_dir, "b.csv", ("draw", "blog", "block"), self.b)
        _write_long(out_dir, "pi.csv", ("draw", "blog", "topic", "value"), self.pi)
        _write_long(out_dir, "rho.csv", ("draw", "blog", "value"), self.rho)
        with open(os.path.join(out_dir, "events.csv"), "w") as fh:
            fh.write("draw,topic,day\n")  # E=1 entries only, zeros implied
            for g in range(n):
                ks, ts = np.nonzero(self.events[g])
                for k, t in zip(ks, ts):
                    fh.write(f"{g},{k},{t}\n")
        _write_long(out_dir, "psi.csv", ("draw", "topic", "value"), self.psi)
        _write_long(out_dir, "theta.csv", ("draw", "coef", "value"), self.theta)

    @classmethod
    def load(cls, out_dir) -> "PosteriorDraws":
        with open(os.path.join(out_dir, "draws_meta.json")) as fh:
            meta = json.load(fh)
        n = meta["n_draws"]
        n_posts, n_blogs = meta["n_posts"], meta["n_blogs"]
        n_topics, horizon = meta["n_topics"], meta["horizon"]
        z = _read_long(out_dir, "z.csv", (n, n_posts), np.int64)
        b = _read_long(out_dir, "b.csv", (n, n_blogs), np.int64)
        pi = _read_long(out_dir, "pi.csv", (n, n_blogs, n_topics), np.float64)
        rho = _read_long(out_dir, "rho.csv", (n, n_blogs), np.float64)
        events = np.zeros((n, n_topics, horizon + 1), dtype=np.uint8)
        with open(os.path.join(out_dir, "events.csv")) as fh:
            next(fh)
            for line in fh:
                g, k, t = (int(x) for x in line.strip().split(","))
                events[g, k, t] = 1
        psi = _read_long(out_dir, "psi.csv", (n, n_topics), np.float64)
        theta = _read_long(out_dir, "theta.csv", (n, N_THETA), np.float64)
        return cls(z, b, pi, rho, events, psi, theta)


def _write_long(out_dir, name, header, arr):
    """Long-format CSV: one row per array cell, index columns then the value."""
    arr = np.asarray(arr)
    is_float = arr.dtype.kind == "f"
    with open(os.path.join(out_dir, name), "w") as fh:
        fh.write(",".join(header) + "\n")
        for idx in np.ndindex(*arr.shape):
            v = arr[idx]
            sv = format(float(v), ".17g") if is_float else str(int(v))
            fh.write(",".join(str(i) for i in idx) + "," + sv + "\n")


def _read_long(out_dir, name, shape, dtype):
    arr = np.zeros(shape, dtype=dtype)
    with open(os.path.join(out_dir, name)) as fh:
        next(fh)
        for line in fh:
            parts = line.strip().split(",")
            idx = tuple(int(x) for x in parts[:-1])
            arr[idx] = dtype(float(parts[-1]) if arr.dtype.kind == "f"
                             else int(parts[-1]))
    return arr
