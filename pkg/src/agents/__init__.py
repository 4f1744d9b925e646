# src/agents/__init__.py

from .analysis_agent import AnalysisAgent, PropertyConfig, Verdict
from .complexity_agent import ComplexityAgent, ComplexityExpr
from .superset_agent import SupersetAgent, SupersetClaim
from .inspector_agent import InspectorAgent
from .oracle_agent import OracleAgent

__all__ = [
    "AnalysisAgent",
    "PropertyConfig",
    "Verdict",
    "ComplexityAgent",
    "ComplexityExpr",
    "SupersetAgent",
    "SupersetClaim",
    "InspectorAgent",
    "OracleAgent",
]
