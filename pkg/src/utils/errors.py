# src/utils/errors.py
from typing import Optional


class SparseDepError(Exception):
    """Base for all sparsedep errors."""
    def __init__(self, message: str, *, original: Optional[Exception] = None):
        super().__init__(message)
        self.original = original


class ParseError(SparseDepError):
    """Problem-file syntax error; carries the 1-based source position."""
    def __init__(self, message: str, line: int = 0, col: int = 0, *, original: Optional[Exception] = None):
        where = f" (line {line}, col {col})" if line else ""
        super().__init__(message + where, original=original)
        self.line = line
        self.col = col


class SymbolError(ParseError):
    pass


class NonlinearError(ParseError):
    pass


class AssertionSpecError(SparseDepError):
    pass


class CapExceeded(SparseDepError):
    pass


class UnboundedIteratorError(SparseDepError):
    def __init__(self, message: str, iterators=(), *, original: Optional[Exception] = None):
        super().__init__(message, original=original)
        self.iterators = tuple(iterators)


class InstanceError(SparseDepError):
    pass


class OracleError(SparseDepError):
    pass


class CorpusError(SparseDepError):
    def __init__(self, message: str, relation: Optional[str] = None, *, original: Optional[Exception] = None):
        if relation:
            message = f"{message} [relation {relation}]"
        super().__init__(message, original=original)
        self.relation = relation


class AnalysisError(SparseDepError):
    pass


class SupersetError(SparseDepError):
    pass


class ComplexityError(SparseDepError):
    pass


class InspectorError(SparseDepError):
    pass


# helper builder
def wrap_exc(msg: str, exc: Exception, exc_type=SparseDepError) -> SparseDepError:
    # already typed errors pass through untouched
    if isinstance(exc, SparseDepError):
        return exc
    return exc_type(msg, original=exc)
