"""bridgecap: estimate bridge load-capacity classes from images.

A batch pipeline with a library core: inventory-file parsing and join-key
normalization (``nbi``), manifest ingestion and labelling (``corpus``),
declarative dataset variants (``datasets``), a dependency-free image
path (``imaging``), a small trainable CNN (``learner``), scoring with
threshold binarization (``evaluation``), synthetic corpora for
quantitative desk-scale runs (``synth``), and a subcommand CLI (``cli``).
"""

__version__ = "0.1.0"

from . import corpus, datasets, evaluation, imaging, nbi, report, synth  # noqa: F401
