"""Exception types shared across the solvers and the CLI.

The CLI maps these onto exit codes: configuration and budget problems exit
with 1, monitor/threshold violations with 2.
"""


class OpinionFlowError(Exception):
    """Base class for all library errors."""


class ConfigError(OpinionFlowError):
    """Invalid scenario file, CLI usage, or inconsistent run configuration."""


class BudgetError(OpinionFlowError):
    """A configured cost cap (step count, tensor size) would be exceeded."""


class EvaluationError(OpinionFlowError):
    """A kernel or mass law produced a non-finite value."""


class MonitorError(OpinionFlowError):
    """A runtime monitor (conservation, positivity, growth, stability) failed.

    Monitors encode theorem conclusions; a violation means a bug or an
    out-of-hypothesis scenario, so integrations abort rather than warn.
    """

    def __init__(self, monitor: str, time: float, detail: str):
        self.monitor = monitor
        self.time = time
        self.detail = detail
        super().__init__(f"monitor '{monitor}' violated at t={time:.6g}: {detail}")
