"""Exception hierarchy shared by every stage of the pipeline."""


class BayesDLError(Exception):
    """Base class for all package errors."""


class DataRejection(BayesDLError):
    """Input data is unusable for estimation (CLI exit code 2)."""


class NumericalFailure(BayesDLError):
    """A numerical routine reached an impossible state (CLI exit code 3)."""


class MalformedRow(DataRejection):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class OrderViolation(DataRejection):
    def __init__(self, match_id: str, message: str, line: int | None = None):
        self.match_id = match_id
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}match {match_id!r}: {message}")


class EmptyCorpus(DataRejection):
    pass


class DomainError(BayesDLError, ValueError):
    pass


class MissingImputation(BayesDLError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class SliceCollapse(NumericalFailure):
    pass


class EmptySamples(BayesDLError, ValueError):
    pass
