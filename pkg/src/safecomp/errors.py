"""Exception hierarchy shared by every safecomp module."""


class SafeCompError(Exception):
    pass


# hashing / codec
class UnencodableValue(SafeCompError, TypeError):
    pass


class DecodeError(SafeCompError, ValueError):
    pass


# certificate
class EmptyChain(SafeCompError, ValueError):
    pass


class UndefinedId(SafeCompError, ValueError):
    pass


class LengthMismatchBeyondDivergence(SafeCompError):
    """Two projections agree on the whole shorter prefix but differ in length."""

    def __init__(self, mine_len, published_len):
        super().__init__(
            f"projections agree on the common prefix of {min(mine_len, published_len)} "
            f"items but have lengths {mine_len} (mine) and {published_len} (published)"
        )
        self.mine_len = mine_len
        self.published_len = published_len


class MalformedFile(SafeCompError, ValueError):
    pass


# iterative
class StateTooLarge(SafeCompError):
    pass


class StepBudgetExhausted(SafeCompError):
    def __init__(self, max_steps):
        super().__init__(f"no fixpoint reached within {max_steps} steps")
        self.max_steps = max_steps


# tasks
class ParseError(SafeCompError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class HeaderMismatch(ParseError):
    pass


class TooManyVariables(SafeCompError, ValueError):
    pass


class MalformedTape(SafeCompError, ValueError):
    pass


# storage
class Unavailable(SafeCompError):
    pass


class MalformedProjection(SafeCompError, ValueError):
    pass


# arbiter
class ArbiterError(SafeCompError):
    """Transaction refused outright; the arbiter state is left untouched."""


class PayloadTooLarge(ArbiterError):
    pass


class WrongStatus(ArbiterError):
    pass


class IndexOutOfRange(ArbiterError):
    pass


class DuplicateProof(ArbiterError):
    pass


class TooEarly(ArbiterError):
    pass


class TooLate(ArbiterError):
    pass


class NotSolver(ArbiterError):
    pass


class UnknownRequest(ArbiterError, KeyError):
    pass


class InsufficientFunds(ArbiterError):
    pass


class WrongDeposit(ArbiterError):
    pass


class BlobUnavailable(ArbiterError):
    pass


class UnknownTask(ArbiterError, KeyError):
    """Task reference or name missing from the shared registry."""


class InvalidTransaction(ArbiterError):
    pass


# simulation
class ScenarioError(SafeCompError):
    def __init__(self, message, tick=None):
        if tick is not None:
            message = f"tick {tick}: {message}"
        super().__init__(message)
        self.tick = tick


class ReplayDivergence(SafeCompError):
    pass
