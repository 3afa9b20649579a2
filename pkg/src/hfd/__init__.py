"""Multimodal handover failure detection: data model, features, baselines and evaluation."""

__version__ = "0.1.0"
