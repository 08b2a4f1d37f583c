"""Multi-agent KTAS emergency-department decision support with an evaluation harness."""

from .backends import BackendError, CompletionRequest, HttpBackend, LlmBackend, ScriptedBackend
from .core import (
    AgentRole,
    Disposition,
    Exact,
    ExpertAnnotation,
    KtasLevel,
    KtasPrediction,
    NOT_APPLICABLE,
    NotApplicable,
    PatientCase,
    Range,
    RunMode,
    StructuredFindings,
    make_case,
)
from .ktas import advisory_classify, explain_classification, load_guide
from .pipeline import PipelinePlan, run_batch, run_case

__version__ = "0.1.0"

__all__ = [
    "AgentRole", "BackendError", "CompletionRequest", "Disposition", "Exact", "ExpertAnnotation",
    "HttpBackend", "KtasLevel", "KtasPrediction", "LlmBackend", "NOT_APPLICABLE", "NotApplicable",
    "PatientCase", "PipelinePlan", "Range", "RunMode", "ScriptedBackend", "StructuredFindings",
    "advisory_classify", "explain_classification", "load_guide", "make_case", "run_batch",
    "run_case", "__version__",
]
