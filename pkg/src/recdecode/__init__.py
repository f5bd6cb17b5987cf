"""Catalog-constrained decoding for generative recommendation."""

from .assistant import (
    AssistantDistribution,
    apply_group_mask,
    markov_model,
    popularity_model,
    step_logratio,
)
from .catalog import EOI, Catalog, Item, build_catalog, ghost_positions, length_stats, tokenize
from .decoder import DecodeConfig, RecommendationList, brute_force_rank, combined_score, decode
from .scorer import DecodingContext, ScorerConfig, SyntheticCopyLM, TableScorer

__version__ = "0.1.0"
