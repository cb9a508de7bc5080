"""Exception types shared across the package.

Every error carries a short machine-parsable class name; the CLI prints it as
``error: <ClassName>: <message>`` and maps it to an exit code.
"""


class EmoGestureError(Exception):
    exit_code = 1


class DegenerateRotationError(EmoGestureError, ValueError):
    """A 6D rotation whose two 3-vectors are zero or (anti)parallel."""

    exit_code = 3


class ShapeError(EmoGestureError, ValueError):
    exit_code = 3


class ValidationError(EmoGestureError, ValueError):
    exit_code = 3


class ResampleRequiredError(EmoGestureError, ValueError):
    exit_code = 3


class LookupFailure(EmoGestureError, KeyError):
    exit_code = 3

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigError(EmoGestureError, ValueError):
    exit_code = 2


class StateError(EmoGestureError, RuntimeError):
    """An operation was invoked before its prerequisite state exists."""

    exit_code = 4


class MissingArtifactError(StateError, FileNotFoundError):
    exit_code = 4


class LoadError(EmoGestureError, ValueError):
    exit_code = 5


class NonFiniteLossError(EmoGestureError, FloatingPointError):
    exit_code = 6

    def __init__(self, component, step, value):
        self.component = component
        self.step = step
        self.value = value
        super().__init__(f"loss component '{component}' became {value} at step {step}")


class FreezeViolationError(EmoGestureError, RuntimeError):
    exit_code = 7
