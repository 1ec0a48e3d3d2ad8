"""Exception hierarchy.

Validation problems (bad input files, designs that violate the identifying
assumptions) derive from :class:`PanelValidationError`; failures during
estimation derive from :class:`EstimationError`. The CLI maps the two
families to different exit codes.
"""


class DIDError(Exception):
    """Base class for all package errors."""


class PanelValidationError(DIDError, ValueError):
    """Input data cannot be turned into a valid panel."""


class UnbalancedPanelError(PanelValidationError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"({g},{t})" for g, t in self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" ... ({len(self.missing)} total)"
        super().__init__(f"unbalanced panel, missing cells: {shown}{more}")


class SharpDesignError(PanelValidationError):
    def __init__(self, group, period):
        self.cell = (group, period)
        super().__init__(f"sharp design violated at ({group},{period}): "
                         "treatment varies within the cell")


class PathologicalDesignError(PanelValidationError):
    """No two initially-untreated groups with distinct first-switch dates."""


class DesignMismatchError(PanelValidationError):
    """The panel does not have the treatment structure a routine requires."""


class EstimationError(DIDError, RuntimeError):
    """A quantity cannot be computed on this panel."""


class HorizonError(EstimationError, IndexError):
    """Requested event-time horizon is outside the admissible range."""


class NoControlsError(EstimationError):
    pass


class ZeroExposureError(EstimationError, ZeroDivisionError):
    """Weighted first-stage denominator is zero."""


class RankDeficientError(EstimationError, ValueError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("rank-deficient design, collinear columns: "
                         + ", ".join(map(str, self.columns)))


class SparseBootstrapError(EstimationError):
    pass


class ConfigError(DIDError, ValueError):
    """A simulation configuration is invalid."""


class AnticipationError(ConfigError):
    """An effect model lets outcomes depend on future treatments."""
