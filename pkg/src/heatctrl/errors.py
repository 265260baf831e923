"""Exception types shared across the package."""


class HeatCtrlError(Exception):
    """Base class for all package-specific errors."""


class FeasibilityError(HeatCtrlError):
    """Initial state has a component outside the controllable subspace.

    Carries the offending residual (norm of the uncontrollable part).
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(HeatCtrlError):
    """Optimizer failed to meet its convergence criteria.

    ``diagnostics`` is a dict with iteration counts, last objective value
    and gradient norm.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class HorizonError(HeatCtrlError):
    """No feasible horizon found inside the search box."""


class DegenerateMultiplierError(HeatCtrlError):
    """Multiplier whose observation vanishes identically on the horizon."""


class OrderMismatchError(HeatCtrlError):
    """The two vanishing-order estimates (power scan vs. log-log fit) disagree.

    Surfaced instead of silently resolved; callers may catch it and flag
    the run.
    """

    def __init__(self, message, time=None, scan_order=None, fit_order=None):
        super().__init__(message)
        self.time = time
        self.scan_order = scan_order
        self.fit_order = fit_order


class ScenarioSchemaError(HeatCtrlError):
    """Scenario configuration violates the schema.

    ``field`` holds a dotted path to the offending entry when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
