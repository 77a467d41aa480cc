"""Raw text to model-ready corpus: TF-IDF variance filtering, rare-token
removal, and significance-tested n-gram mining.

Raw input: one post per line, `day<TAB>blog<TAB>space-separated tokens<TAB>
comma-separated links`. Merged n-grams join their parts with '.'.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

from scipy.stats import poisson

from .corpus import Corpus, CorpusFormatError, Post, Vocabulary

NGRAM_JOIN = "."


class UndefinedTokenError(ValueError):
    """TF-IDF requested for a token absent from the corpus."""


@dataclass
class RawPost:
    day: int
    blog: str
    tokens: list[str]
    links: list[str] = field(default_factory=list)


def read_raw_posts(path) -> list[RawPost]:
    posts = []
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
            day_s, blog, toks_s, links_s = parts
            try:
                day = int(day_s)
            except ValueError:
                raise CorpusFormatError(f"bad day {day_s!r}", path, lineno)
            if day < 1:
                raise CorpusFormatError(f"day {day} < 1", path, lineno)
            tokens = toks_s.split() if toks_s else []
            links = [x for x in links_s.split(",") if x] if links_s else []
            posts.append(RawPost(day, blog, tokens, links))
    return posts


def apply_stemmer(posts, stemmer) -> list[RawPost]:
    """Map every token through `stemmer` (None = identity)."""
    if stemmer is None:
        return posts
    return [RawPost(p.day, p.blog, [stemmer(t) for t in p.tokens],
                    list(p.links)) for p in posts]


def tfidf(f_wd, n_w) -> float:
    """Per-post score: within-post count over corpus document frequency."""
    if n_w == 0:
        raise UndefinedTokenError("token occurs in no post (n_w = 0)")
    return f_wd / n_w


@dataclass
class TokenStats:
    """Corpus-level token statistics for the filters."""

    n_posts: int
    doc_freq: dict
    post_freq: list  # sparse per-post counts, aligned with the post list
    variance: dict   # population variance of the TF-IDF score over posts


def token_stats(posts) -> TokenStats:
    doc_freq = Counter()
    post_freq = []
    for p in posts:
        counts = Counter(p.tokens)
        post_freq.append(counts)
        doc_freq.update(counts.keys())
    n_posts = len(posts)
    sums = Counter()
    sumsq = Counter()
    for counts in post_freq:
        for w, f in counts.items():
            score = tfidf(f, doc_freq[w])
            sums[w] += score
            sumsq[w] += score * score
    variance = {
        w: sumsq[w] / n_posts - (sums[w] / n_posts) ** 2 for w in doc_freq
    }
    return TokenStats(n_posts, dict(doc_freq), post_freq, variance)


def variance_filter(stats: TokenStats, keep_top=None,
                    min_variance=None) -> set:
    """Keep informative tokens by TF-IDF variance.

    Exactly one mode: `keep_top` retains that fraction of tokens ranked by
    variance (ties broken by token order); `min_variance` retains tokens
    with variance strictly above the threshold. Zero-variance tokens are
    always dropped (they score identically in every post).
    """
    if (keep_top is None) == (min_variance is None):
        raise ValueError("pass exactly one of keep_top / min_variance")
    if min_variance is not None:
        return {w for w, v in stats.variance.items() if v > min_variance}
    if not (0.0 <= keep_top <= 1.0):
        raise ValueError(f"keep_top must be in [0, 1], got {keep_top}")
    ranked = sorted(stats.variance, key=lambda w: -stats.variance[w])
    n_keep = round(keep_top * len(ranked))
    return {w for w in ranked[:n_keep] if stats.variance[w] > 0.0}


def rare_token_filter(posts, min_doc_fraction=0.0002) -> Vocabulary:
    """Drop tokens present in strictly less than `min_doc_fraction` of posts.

    Returns the retained tokens as a Vocabulary in first-seen order.
    """
    doc_freq = Counter()
    for p in posts:
        doc_freq.update(set(p.tokens))
    n_posts = len(posts)
    dropped = {w for w, n in doc_freq.items()
               if n / n_posts < min_doc_fraction}
    kept = []
    seen = set()
    for p in posts:
        for w in p.tokens:
            if w not in dropped and w not in seen:
                seen.add(w)
                kept.append(w)
    return Vocabulary(tuple(kept))


def restrict_tokens(posts, kept) -> list[RawPost]:
    """Remove tokens outside `kept`; posts may become empty but are retained
    (they still carry day/blog/link information)."""
    kept = set(kept)
    return [RawPost(p.day, p.blog, [t for t in p.tokens if t in kept],
                    list(p.links)) for p in posts]


@dataclass
class NgramCandidate:
    parts: tuple
    observed: int
    expected: float
    significance: float

    @property
    def joined(self) -> str:
        return NGRAM_JOIN.join(self.parts)


def poisson_upper_tail(observed, mean) -> float:
    """P(X >= observed) for X ~ Poisson(mean)."""
    if observed <= 0:
        return 1.0
    if mean <= 0.0:
        warnings.warn("zero expected count with positive observed count")
        return 0.0
    return float(poisson.sf(observed - 1, mean))


def test_ngram(candidate: NgramCandidate, n_tokens, p_a, p_b) -> float:
    """Significance of a candidate: upper-tail probability of its observed
    count under independence (Poisson with mean N * p_a * p_b)."""
    expected = n_tokens * p_a * p_b
    sig = poisson_upper_tail(candidate.observed, expected)
    candidate.expected = expected
    candidate.significance = sig
    return sig


def _adjacent_pair_counts(posts):
    token_counts = Counter()
    pair_counts = Counter()
    for p in posts:
        token_counts.update(p.tokens)
        for a, b in zip(p.tokens, p.tokens[1:]):
            pair_counts[(a, b)] += 1
    return token_counts, pair_counts


def _merge_pass(posts, accepted_pairs):
    """Greedy left-to-right rewrite merging accepted adjacent pairs."""
    merges = 0
    out = []
    for p in posts:
        toks = p.tokens
        new = []
        i = 0
        while i < len(toks):
            if i + 1 < len(toks) and (toks[i], toks[i + 1]) in accepted_pairs:
                new.append(toks[i] + NGRAM_JOIN + toks[i + 1])
                merges += 1
                i += 2
            else:
                new.append(toks[i])
                i += 1
        out.append(RawPost(p.day, p.blog, new, list(p.links)))
    return out, merges


@dataclass
class NgramResult:
    posts: list
    accepted: list   # NgramCandidate, pass order
    merges: int


def mine_ngrams(posts, alpha=0.05, bigram_min=500,
                higher_min=100) -> NgramResult:
    """Two-pass n-gram mining.

    Pass 1 accepts adjacent bigrams that are both significant (Poisson
    upper tail <= alpha) and frequent (count >= bigram_min), then merges
    them. Pass 2 pairs a merged bigram with a unigram (trigram, either
    order) or another bigram (quadrigram) and keeps candidates on the count
    floor alone (count > higher_min); significance is still recorded.
    """
    token_counts, pair_counts = _adjacent_pair_counts(posts)
    n_tokens = sum(token_counts.values())
    accepted = []
    accepted_pairs = set()
    for (a, b), obs in sorted(pair_counts.items()):
        cand = NgramCandidate((a, b), obs, 0.0, 1.0)
        sig = test_ngram(cand, n_tokens,
                         token_counts[a] / n_tokens,
                         token_counts[b] / n_tokens)
        if sig <= alpha and obs >= bigram_min:
            accepted.append(cand)
            accepted_pairs.add((a, b))
    posts, merges = _merge_pass(posts, accepted_pairs)
    bigram_tokens = {c.joined for c in accepted}

    token_counts2, pair_counts2 = _adjacent_pair_counts(posts)
    n_tokens2 = sum(token_counts2.values())
    accepted2_pairs = set()
    for (a, b), obs in sorted(pair_counts2.items()):
        a_big, b_big = a in bigram_tokens, b in bigram_tokens
        if not (a_big or b_big):
            continue  # plain bigram of unigrams: pass-1 territory
        cand = NgramCandidate((a, b), obs, 0.0, 1.0)
        test_ngram(cand, n_tokens2,
                   token_counts2[a] / n_tokens2,
                   token_counts2[b] / n_tokens2)
        if obs > higher_min:
            accepted.append(cand)
            accepted2_pairs.add((a, b))
    posts, merges2 = _merge_pass(posts, accepted2_pairs)
    return NgramResult(posts, accepted, merges + merges2)


def build_corpus(posts) -> Corpus:
    """Pack raw posts into a model-ready Corpus (first-seen id order)."""
    tok_index = {}
    tok_list = []
    blog_index = {}
    blog_list = []

    def blog_id(name):
        if name not in blog_index:
            blog_index[name] = len(blog_list)
            blog_list.append(name)
        return blog_index[name]

    horizon = max((p.day for p in posts), default=1)
    packed = []
    for p in posts:
        counts = {}
        for t in p.tokens:
            if t not in tok_index:
                tok_index[t] = len(tok_list)
                tok_list.append(t)
            w = tok_index[t]
            counts[w] = counts.get(w, 0) + 1
        i = blog_id(p.blog)
        links = {blog_id(x) for x in p.links} - {i}
        packed.append(Post(i, p.day, counts, frozenset(links)))
    return Corpus(packed, Vocabulary(tuple(tok_list)), len(blog_list),
                  horizon, tuple(blog_list))


@dataclass
class PreprocessReport:
    n_posts: int
    tokens_before: int
    tokens_after_filters: int
    tokens_after_merging: int
    vocab_before: int
    vocab_after: int
    merges: int
    ngrams: list


def preprocess_pipeline(raw_posts, *, stemmer=None, keep_top=None,
                        min_variance=None, min_doc_fraction=0.0002,
                        ngram_alpha=0.05, bigram_min=500, higher_min=100,
                        mine=True):
    """Full pipeline: stem -> variance filter (optional) -> rare-token
    filter -> n-gram mining -> Corpus. Returns (corpus, report)."""
    posts = apply_stemmer(raw_posts, stemmer)
    tokens_before = sum(len(p.tokens) for p in posts)
    vocab_before = len({t for p in posts for t in p.tokens})
    if keep_top is not None or min_variance is not None:
        stats = token_stats(posts)
        kept = variance_filter(stats, keep_top=keep_top,
                               min_variance=min_variance)
        posts = restrict_tokens(posts, kept)
    vocab = rare_token_filter(posts, min_doc_fraction)
    posts = restrict_tokens(posts, vocab.tokens)
    tokens_after_filters = sum(len(p.tokens) for p in posts)
    if mine:
        result = mine_ngrams(posts, ngram_alpha, bigram_min, higher_min)
        posts, accepted, merges = result.posts, result.accepted, result.merges
    else:
        accepted, merges = [], 0
    tokens_after_merging = sum(len(p.tokens) for p in posts)
    corpus = build_corpus(posts)
    report = PreprocessReport(
        n_posts=len(posts),
        tokens_before=tokens_before,
        tokens_after_filters=tokens_after_filters,
        tokens_after_merging=tokens_after_merging,
        vocab_before=vocab_before,
        vocab_after=len(corpus.vocabulary),
        merges=merges,
        ngrams=accepted,
    )
    return corpus, report
