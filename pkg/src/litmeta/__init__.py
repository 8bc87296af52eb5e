"""Science mapping and cluster-conditioned meta-analysis of a research literature.

Bibliographic coupling and Louvain communities organise a screened corpus;
partial-correlation effect sizes are then pooled and tested for publication
bias overall and within each community.
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = ["__version__"]
