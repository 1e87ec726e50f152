"""Exception hierarchy shared by every layer."""


class SublinError(Exception):
    """Base class for all errors raised by sublinlab."""


class InvalidParameter(SublinError, ValueError):
    pass


class InvalidInput(SublinError, ValueError):
    pass


class DomainOverflow(SublinError):
    """The grid does not contain the set of states the computation can reach."""


class TooLarge(SublinError):
    """An instance exceeds the size caps of an exact (enumerative) routine."""


class InvalidInstance(SublinError, ValueError):
    """An instance violates the hypotheses a check requires."""


class ScenarioError(SublinError, ValueError):
    """Malformed or inconsistent scenario configuration."""
