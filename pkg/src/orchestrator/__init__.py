# src/orchestrator/__init__.py

from .aggregator import Aggregator

__all__ = ["Aggregator"]
