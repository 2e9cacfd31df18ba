"""Exception hierarchy shared by the library and the CLI."""


class InvalidParameter(ValueError):
    """A parameter lies outside the domain where an operation is defined."""


class RegimeError(ValueError):
    """Parameters are valid but outside the range a closed-form prediction covers."""


class CriticalCaseError(ZeroDivisionError):
    """Degenerate parameter combination where a formula has a vanishing denominator."""


class InvalidState(ValueError):
    """A discrete field contains non-finite values or violates its invariants."""


class InvalidTestFunction(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class NotApplicable(ValueError):
    """A check was requested outside the regime where it means anything."""


class SolverError(RuntimeError):
    def __init__(self, message, diagnostics=None, field=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.field = field


class NonConvergence(SolverError):
    pass


class DivergenceDetected(SolverError):
    """Raised by the continuation driver when truncated energies stop settling."""


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key
