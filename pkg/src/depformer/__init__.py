"""Dependency-Transformer: tree-relation-aware self-attention for sentence modelling."""

__version__ = "0.1.0"
