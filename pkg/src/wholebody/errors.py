"""Exception hierarchy shared by every stage of the pipeline."""


class WholeBodyError(Exception):
    """Base class for all package errors."""


class ConfigError(WholeBodyError):
    """Invalid configuration, bad input file, or contract violation."""


class ModelError(ConfigError):
    """A kinematic model or skeleton file failed validation."""


class NumericError(WholeBodyError):
    """Non-finite values or a failed numerical routine."""

    def __init__(self, message, frame=None):
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)
        self.frame = frame


class OptimizationError(NumericError):
    """Shape fitting diverged."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class DegenerateDirectionError(NumericError):
    """A body-part primitive has no defined direction."""


class AgentError(WholeBodyError):
    """Backend failure or an agent response that never validated."""


class AgentParseError(AgentError):
    """Agent response could not be parsed after all re-prompts."""
