"""rcgauge: gauge how hard a question is to answer from a retrieval corpus.

Given a question and its reference answers, the pipeline retrieves a batch
of documents, scores per-document answer correctness and per-token
relevance, and applies two thresholded constraints to decide whether the
question is retrieval-complex.
"""

__version__ = "0.1.0"

from rcgauge.core import PipelineConfig, Question, Thresholds, load_config, tokenize
from rcgauge.retrieval import build_index, load_index, retrieve_bm25, retrieve_hybrid, save_index

__all__ = [
    "__version__",
    "PipelineConfig",
    "Question",
    "Thresholds",
    "load_config",
    "tokenize",
    "build_index",
    "load_index",
    "retrieve_bm25",
    "retrieve_hybrid",
    "save_index",
]
