"""delta-audit: explain what changed between two model versions.

Computes occlusion attributions for versions A and B against a shared
baseline and anchor class, differences them, scores the update with a
suite of magnitude/agreement/behaviour/robustness metrics, and classifies
it as benign, behaviour-aligned, or risky for CI gating.
"""

from .data import Dataset, SplitIndices, Standardizer, embedded_datasets, load_csv
from .explainer import AttributionMatrix, Baseline, DeltaMatrix
from .learners import LearnerSpec, TrainedModel
from .pipeline import AuditConfig, DeltaReport, VerdictThresholds, run_audit, run_batch
from .scoring import AnchoredScore, ScoreModel
from .suite import DeltaMetrics

__version__ = "0.1.0"

__all__ = [
    "AnchoredScore",
    "AttributionMatrix",
    "AuditConfig",
    "Baseline",
    "Dataset",
    "DeltaMatrix",
    "DeltaMetrics",
    "DeltaReport",
    "LearnerSpec",
    "ScoreModel",
    "SplitIndices",
    "Standardizer",
    "TrainedModel",
    "VerdictThresholds",
    "embedded_datasets",
    "load_csv",
    "run_audit",
    "run_batch",
    "__version__",
]
