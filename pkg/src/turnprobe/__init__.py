"""Toolkit for probing how well LLMs extract well-structured utterances
from noisy dialogue transcriptions, scored token by token against gold
dependency-tree annotations."""

__version__ = "0.1.0"
