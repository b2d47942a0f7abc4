"""Exception types raised by homog_lab."""


class HomogLabError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(HomogLabError, ValueError):
    pass


class IncompleteFunctionError(HomogLabError, KeyError):
    """A lattice function has no value at a site the computation needs."""

    def __init__(self, site, message=None):
        self.site = tuple(site)
        super().__init__(message or f"lattice function has no value at site {self.site}")

    def __str__(self):
        return str(self.args[0])


class IncompatibleFunctionError(HomogLabError, ValueError):
    """Two lattice functions do not live on the same lattice/site set."""


class InvalidSpinError(HomogLabError, ValueError):
    pass


class RefusalError(HomogLabError, ValueError):
    """An exhaustive method was asked to handle a problem above its budget."""

    def __init__(self, message, count=None):
        self.count = count
        super().__init__(message)


class SolverError(HomogLabError, RuntimeError):
    """An iterative solver failed; ``diagnostics`` carries its state."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)
