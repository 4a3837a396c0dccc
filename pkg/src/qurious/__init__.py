"""qurious: question-corpus analytics and semantic retrieval.

Pipeline stages: ingest and type a question corpus, embed it (file, HTTP
sidecar, or deterministic mock), build an inverted-file cosine index,
calibrate similarity thresholds, detect equivalent-question communities,
retrieve single-sentence answers from a knowledge base, and report
type-by-topic analytics.
"""

from importlib import resources

__version__ = "0.1.0"


def mini_corpus_path() -> str:
    """Path to the bundled 40-question synthetic corpus."""
    return str(resources.files("qurious").joinpath("data/mini_corpus.txt"))
