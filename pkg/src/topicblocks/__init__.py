"""Joint dynamic-topic and topic-interest block model of linked blogs."""

__version__ = "0.1.0"

from .config import ConfigError, ModelConfig, parse_config, validate_config
from .corpus import (AdjacencyTensor, AuditError, Corpus, CorpusFormatError,
                     Post, PosteriorDraws, Vocabulary, load_corpus,
                     save_corpus)
from .diagnostics import (adjusted_rand_index, arun_criterion,
                          map_assignments, summarize, wf_series)
from .genmodel import BlockCatalog, block_index, link_probability, simulate
from .inference import FitResult, run_sampler

__all__ = [
    "AdjacencyTensor", "AuditError", "BlockCatalog", "ConfigError", "Corpus",
    "CorpusFormatError", "FitResult", "ModelConfig", "Post", "PosteriorDraws",
    "Vocabulary", "adjusted_rand_index", "arun_criterion", "block_index",
    "link_probability", "load_corpus", "map_assignments", "parse_config",
    "run_sampler", "save_corpus", "simulate", "summarize", "validate_config",
    "__version__",
]
