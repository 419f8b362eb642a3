"""RL-guided LLM search over semantics-preserving program transformations.

The package builds a reasoning tree of candidate transformations between a
source and a target program, scores each candidate with code-specific metrics,
and trains a graph-attention actor-critic agent that decides whether to keep
exploring a candidate or to backtrack.
"""

__version__ = "0.1.0"
