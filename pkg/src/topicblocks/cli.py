"""Command-line pipeline: preprocess, simulate, fit, summarize, wf, ari,
select-k. Every run writes a manifest under --out-dir; inputs are never
mutated.

Exit codes: 0 success, 2 usage, 3 bad config, 4 IO/format, 5 internal
consistency audit failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .config import (ConfigError, ModelConfig, apply_overrides, parse_config,
                     require_valid, write_config)
from .corpus import (AdjacencyTensor, AuditError, Corpus, CorpusFormatError,
                     PosteriorDraws, Vocabulary, load_corpus, save_corpus)
from .diagnostics import (adjusted_rand_index, ari_series, map_assignments,
                          select_topic_count, summarize, wf_series)
from .genmodel import save_truth, simulate
from .inference import run_sampler
from .manifest import build_manifest, utc_now, write_manifest
from .preprocess import preprocess_pipeline, read_raw_posts

log = logging.getLogger("topicblocks")


def _load_config(args) -> ModelConfig:
    cfg = parse_config(args.config) if args.config else ModelConfig()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    cfg = apply_overrides(cfg, overrides)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return format(float(x), ".10g")


def _load_inputs(corpus_path, links_path, vocab_path):
    vocab = Vocabulary.load(vocab_path) if vocab_path else None
    corpus = load_corpus(corpus_path, vocabulary=vocab)
    adjacency = None
    if links_path:
        blog_index = {name: i for i, name in enumerate(corpus.blog_names)}
        adjacency = AdjacencyTensor.load(links_path, blog_index,
                                         corpus.horizon)
    return corpus, adjacency


# ------------------------------------------------------------- commands

def cmd_preprocess(args) -> int:
    out = _out_dir(args)
    started = utc_now()
    raw = read_raw_posts(args.input)
    corpus, report = preprocess_pipeline(
        raw,
        keep_top=args.keep_top,
        min_variance=args.min_variance,
        min_doc_fraction=args.min_doc_fraction,
        ngram_alpha=args.alpha,
        bigram_min=args.bigram_min,
        higher_min=args.higher_min,
        mine=not args.no_ngrams,
    )
    save_corpus(corpus, os.path.join(out, "corpus.tsv"))
    corpus.vocabulary.save(os.path.join(out, "vocab.txt"))
    _write_csv(
        os.path.join(out, "ngrams.csv"),
        ("ngram", "count", "significance"),
        [(c.joined, c.observed, _fmt(c.significance))
         for c in report.ngrams],
    )
    write_manifest(out, build_manifest(
        "preprocess",
        inputs={"raw": args.input},
        started=started,
        finished=utc_now(),
        extra={"report": {
            "n_posts": report.n_posts,
            "tokens_before": report.tokens_before,
            "tokens_after_filters": report.tokens_after_filters,
            "tokens_after_merging": report.tokens_after_merging,
            "vocab_before": report.vocab_before,
            "vocab_after": report.vocab_after,
            "merges": report.merges,
        }},
    ))
    log.info("preprocess: %d posts, vocabulary %d -> %d, %d merges",
             report.n_posts, report.vocab_before, report.vocab_after,
             report.merges)
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    started = utc_now()
    cfg = require_valid(_load_config(args))
    pin = {}
    for name in ("theta", "psi", "rho"):
        val = getattr(args, name)
        if val is not None:
            pin[name] = np.array([float(x) for x in val.split(",")])
    result = simulate(cfg, args.blogs, args.days, args.vocab,
                      p_mode=args.p_mode, **pin)
    save_corpus(result.corpus, os.path.join(out, "corpus.tsv"))
    result.corpus.vocabulary.save(os.path.join(out, "vocab.txt"))
    result.adjacency.save(os.path.join(out, "links.tsv"),
                          result.corpus.blog_names)
    save_truth(result.truth, os.path.join(out, "truth.json"))
    write_config(cfg, os.path.join(out, "config.txt"))
    write_manifest(out, build_manifest(
        "simulate", config=cfg.to_dict(), seed=cfg.seed,
        started=started, finished=utc_now(),
        extra={"n_posts": len(result.corpus),
               "n_links": int(result.adjacency.a.sum())},
    ))
    log.info("simulate: %d posts, %d links", len(result.corpus),
             int(result.adjacency.a.sum()))
    return 0


def _fit_one(corpus, adjacency, cfg, out, text_only) -> dict:
    started = utc_now()
    t0 = time.perf_counter()
    log_path = os.path.join(out, "fit_log.ndjson")
    with open(log_path, "w") as log_fh:
        def log_fn(record):
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            if record["iteration"] % 100 == 0:
                log.info("iteration %d: %d topic moves",
                         record["iteration"], record["topic_moves"])

        result = run_sampler(corpus, adjacency, cfg, text_only=text_only,
                             log_fn=log_fn)
    result.draws.save(os.path.join(out, "draws"))
    manifest = build_manifest(
        "fit", config=cfg.to_dict(), seed=cfg.seed,
        started=started, finished=utc_now(),
        extra={
            "acceptance": result.acceptance,
            "wall_time_s": round(time.perf_counter() - t0, 3),
            "n_draws": result.draws.n_draws,
            "text_only": text_only,
        },
    )
    return manifest


def _fit_chain_worker(payload) -> dict:
    (corpus_path, links_path, vocab_path, cfg_dict, out, text_only) = payload
    cfg = apply_overrides(ModelConfig(), cfg_dict)
    corpus, adjacency = _load_inputs(corpus_path, links_path, vocab_path)
    os.makedirs(out, exist_ok=True)
    manifest = _fit_one(corpus, adjacency, cfg, out, text_only)
    write_manifest(out, manifest)
    return {"out": out, "seed": cfg.seed,
            "acceptance": manifest["acceptance"]}


def cmd_fit(args) -> int:
    out = _out_dir(args)
    started = utc_now()
    cfg = require_valid(_load_config(args))
    inputs = {"corpus": args.corpus}
    if args.links:
        inputs["links"] = args.links
    if args.vocab:
        inputs["vocab"] = args.vocab
    text_only = args.text_only or not args.links
    if args.chains == 1:
        corpus, adjacency = _load_inputs(args.corpus, args.links, args.vocab)
        manifest = _fit_one(corpus, adjacency, cfg, out, text_only)
        manifest["inputs"] = build_manifest("fit", inputs=inputs)["inputs"]
        write_manifest(out, manifest)
        return 0
    seeds = np.random.SeedSequence(cfg.seed).spawn(args.chains)
    payloads = []
    for c, ss in enumerate(seeds):
        chain_cfg = replace(cfg, seed=int(ss.generate_state(1)[0]))
        payloads.append((args.corpus, args.links, args.vocab,
                         {k: v for k, v in chain_cfg.to_dict().items()},
                         os.path.join(out, f"chain-{c:02d}"), text_only))
    workers = min(args.chains, os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chain_info = list(pool.map(_fit_chain_worker, payloads))
    write_manifest(out, build_manifest(
        "fit", config=cfg.to_dict(), seed=cfg.seed, inputs=inputs,
        started=started, finished=utc_now(),
        extra={"chains": chain_info, "text_only": text_only},
    ))
    return 0


def _draws_dir(path) -> str:
    if os.path.exists(os.path.join(path, "draws_meta.json")):
        return path
    nested = os.path.join(path, "draws")
    if os.path.exists(os.path.join(nested, "draws_meta.json")):
        return nested
    raise FileNotFoundError(f"no posterior draws under {path}")


def cmd_summarize(args) -> int:
    out = _out_dir(args)
    started = utc_now()
    draws = PosteriorDraws.load(_draws_dir(args.draws))
    rows = summarize(draws)
    _write_csv(
        os.path.join(out, "summary.csv"),
        ("family", "index", "mean", "sd", "lo", "hi"),
        [(r["family"], r["index"], _fmt(r["mean"]), _fmt(r["sd"]),
          _fmt(r["lo"]), _fmt(r["hi"])) for r in rows],
    )
    mixing_rows = []
    for family, labels in (("z", draws.z), ("b", draws.b)):
        series = ari_series(labels) if labels.shape[0] > 1 else []
        for g, v in enumerate(series):
            mixing_rows.append((family, g, _fmt(v)))
    _write_csv(os.path.join(out, "mixing.csv"),
               ("family", "step", "ari"), mixing_rows)
    z_map, b_map = map_assignments(draws)
    _write_csv(os.path.join(out, "map_z.csv"), ("post", "topic"),
               list(enumerate(z_map.tolist())))
    _write_csv(os.path.join(out, "map_b.csv"), ("blog", "block"),
               list(enumerate(b_map.tolist())))
    write_manifest(out, build_manifest(
        "summarize", inputs={}, started=started, finished=utc_now(),
        extra={"n_draws": draws.n_draws, "draws_dir": args.draws},
    ))
    return 0


def cmd_wf(args) -> int:
    out = _out_dir(args)
    started = utc_now()
    corpus, _ = _load_inputs(args.corpus, None, args.vocab)
    draws = PosteriorDraws.load(_draws_dir(args.draws))
    if args.token in corpus.vocabulary.index:
        token = corpus.vocabulary.id(args.token)
    else:
        raise CorpusFormatError(f"token {args.token!r} not in vocabulary")
    if args.days:
        lo, _, hi = args.days.partition(":")
        days = range(int(lo), int(hi) + 1)
    else:
        days = range(1, corpus.horizon + 1)
    ell = args.ell if args.ell is not None else ModelConfig().ell
    rows = wf_series(corpus, draws, token, args.topic, days, ell)
    _write_csv(
        os.path.join(out, "wf.csv"),
        ("day", "token", "mean", "lo", "hi", "n_defined"),
        [(r["day"], args.token, _fmt(r["mean"]), _fmt(r["lo"]),
          _fmt(r["hi"]), r["n_defined"]) for r in rows],
    )
    write_manifest(out, build_manifest(
        "wf", inputs={"corpus": args.corpus}, started=started,
        finished=utc_now(),
        extra={"token": args.token, "topic": args.topic},
    ))
    return 0


def _read_labels(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def cmd_ari(args) -> int:
    out = _out_dir(args)
    started = utc_now()
    a = _read_labels(args.a)
    b = _read_labels(args.b)
    try:
        value = adjusted_rand_index(a, b)
    except ValueError as e:
        raise CorpusFormatError(str(e))
    with open(os.path.join(out, "ari.txt"), "w") as fh:
        fh.write(_fmt(value) + "\n")
    print(_fmt(value))
    write_manifest(out, build_manifest(
        "ari", inputs={"a": args.a, "b": args.b},
        started=started, finished=utc_now(), extra={"ari": value},
    ))
    return 0


def cmd_select_k(args) -> int:
    out = _out_dir(args)
    started = utc_now()
    cfg = require_valid(_load_config(args))
    corpus, adjacency = _load_inputs(args.corpus, args.links, args.vocab)
    if args.kmin < 1 or args.kmax < args.kmin:
        raise ConfigError(f"bad K range {args.kmin}..{args.kmax}")
    if args.restarts < 1:
        raise ConfigError(f"restarts must be at least 1, got {args.restarts}")
    values, best, _ = select_topic_count(
        corpus, adjacency, cfg, args.kmin, args.kmax,
        restarts=args.restarts, text_only=not args.full,
    )
    log.info("select-k: fitted K=%d..%d with %d restarts each",
             args.kmin, args.kmax, args.restarts)
    _write_csv(os.path.join(out, "select_k.csv"), ("K", "criterion"),
               [(k, _fmt(v)) for k, v in sorted(values.items())])
    with open(os.path.join(out, "chosen_k.txt"), "w") as fh:
        fh.write(f"{best}\n")
    print(best)
    write_manifest(out, build_manifest(
        "select-k", config=cfg.to_dict(), seed=cfg.seed,
        inputs={"corpus": args.corpus}, started=started, finished=utc_now(),
        extra={"criterion": {str(k): v for k, v in values.items()},
               "chosen": best},
    ))
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topicblocks",
        description=__doc__.splitlines()[0],
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p, with_seed=True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (repeatable)")
        if with_seed:
            p.add_argument("--seed", type=int, help="override config seed")

    p = sub.add_parser("preprocess", help="raw text to model-ready corpus")
    p.add_argument("--input", required=True, help="raw posts file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--keep-top", type=float,
                   help="variance filter: keep this fraction of tokens")
    p.add_argument("--min-variance", type=float,
                   help="variance filter: absolute threshold")
    p.add_argument("--min-doc-fraction", type=float, default=0.0002)
    p.add_argument("--alpha", type=float, default=0.05,
                   help="n-gram significance level")
    p.add_argument("--bigram-min", type=int, default=500)
    p.add_argument("--higher-min", type=int, default=100)
    p.add_argument("--no-ngrams", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--blogs", type=int, default=40)
    p.add_argument("--days", type=int, default=100)
    p.add_argument("--vocab", type=int, default=60)
    p.add_argument("--p-mode", choices=("uniform", "category"),
                   default="uniform")
    p.add_argument("--theta", help="pin link coefficients (5 floats, csv)")
    p.add_argument("--psi", help="pin event boosts (csv)")
    p.add_argument("--rho", help="pin post rates (csv)")
    add_config_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    p.add_argument("--corpus", required=True)
    p.add_argument("--links")
    p.add_argument("--vocab")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--text-only", action="store_true",
                   help="topic stage only (skips network/blocks)")
    add_config_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="posterior summaries from draws")
    p.add_argument("--draws", required=True, help="fit output directory")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("wf", help="weighted-frequency timeline of a token")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab")
    p.add_argument("--draws", required=True)
    p.add_argument("--token", required=True)
    p.add_argument("--topic", type=int, required=True)
    p.add_argument("--days", help="day range lo:hi (default full horizon)")
    p.add_argument("--ell", type=int, help="window length (default config)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_wf)

    p = sub.add_parser("ari", help="adjusted Rand index of two label files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ari)

    p = sub.add_parser("select-k", help="topic-count selection over a grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--links")
    p.add_argument("--vocab")
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--full", action="store_true",
                   help="full joint fits instead of text-only")
    p.add_argument("--restarts", type=int, default=3,
                   help="fits per K; the best-scoring one is kept")
    p.add_argument("--out-dir", required=True)
    add_config_args(p)
    p.set_defaults(func=cmd_select_k)

    return parser


def dispatch(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: bad configuration: {e}", file=sys.stderr)
        return 3
    except CorpusFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except AuditError as e:
        print(f"error: internal consistency audit failed: {e}",
              file=sys.stderr)
        return 5


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
