class BfppcError(Exception):
    """Base class for toolkit errors."""


class DivergenceError(BfppcError):
    """A state or intermediate value became non-finite or exceeded the divergence threshold."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class SynthesisError(BfppcError):
    pass


class InfeasibleError(BfppcError):
    """Controller parameters violate their feasibility conditions."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ScenarioError(BfppcError):
    pass
