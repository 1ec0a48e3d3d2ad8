"""Difference-in-differences event studies for panels where treatment can
be non-binary and can change more than once.

Main entry points are :class:`DIDEventStudy` and :class:`TWFEDiagnostics`;
the function-level API lives in the submodules.
"""

__version__ = "0.1.0"

from .estimator import DIDEventStudy, TWFEDiagnostics, analyze
from .estimators import EventStudyResult, event_study
from .exceptions import (
    ConfigError,
    DIDError,
    EstimationError,
    PanelValidationError,
)
from .inference import BootstrapSpec, analytic_ci, bootstrap_event_study, influence_decomposition
from .panel import Panel, design_stats, ingest_csv
from .placebos import placebo_study
from .simulate import SimConfig, run_monte_carlo
from .twfe import prop1_weights, prop3_weights, prop4_weights

__all__ = [
    "BootstrapSpec", "ConfigError", "DIDError", "DIDEventStudy", "EstimationError",
    "EventStudyResult", "Panel", "PanelValidationError", "SimConfig", "TWFEDiagnostics",
    "__version__", "analytic_ci", "analyze", "bootstrap_event_study", "design_stats",
    "event_study", "influence_decomposition", "ingest_csv", "placebo_study",
    "prop1_weights", "prop3_weights", "prop4_weights", "run_monte_carlo",
]
