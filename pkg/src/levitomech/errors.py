"""Exception types shared by the library and the command line."""


class ConfigError(ValueError):
    """Invalid or inconsistent input configuration."""


class DomainError(ValueError):
    """A formula was evaluated outside its domain of validity."""


class ConvergenceError(RuntimeError):
    """A numerical procedure failed to reach its accuracy target."""


class TruncationError(ConvergenceError):
    """The Fock cutoff is too small for the requested state."""


class TruncationWarning(RuntimeWarning):
    pass
