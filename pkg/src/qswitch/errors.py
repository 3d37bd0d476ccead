"""Exception types shared across the toolkit."""


class QswitchError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(QswitchError):
    """Malformed or inconsistent problem configuration."""


class PrecisionError(QswitchError):
    """The abstraction precision condition does not hold."""


class EmptySpecError(QswitchError):
    """A specification set contracted to the empty set."""


class IntegrationOverflowError(QswitchError):
    """A flow computation produced a non-finite state."""


class NotIncrementallyStableError(QswitchError):
    """No positive contraction rate exists for the given modes."""


class DomainError(QswitchError):
    """Query outside the domain of a table, range, or tree."""


class FormatError(QswitchError):
    """Corrupt or unsupported artifact file."""


class VerificationError(QswitchError):
    """A controller artifact failed its validity check."""


class GuaranteeError(QswitchError):
    """A closed-loop run violated a synthesized guarantee."""
