"""Exception hierarchy shared by the solvers, the harness and the CLI."""


class DressError(Exception):
    """Base class for every error raised by this package."""

    #: process exit code used by the command-line front end
    exit_code = 1


class ContractViolation(DressError, ValueError):
    """Inputs break a documented precondition (shapes, signs, counts)."""

    exit_code = 64


class SingularSystem(DressError, ArithmeticError):
    """A linear system that must be solved is numerically singular."""

    exit_code = 3

    def __init__(self, message, condition_number=float("inf"), stage=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.stage = stage


class RankDeficient(DressError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, rank, required):
        super().__init__(message)
        self.rank = rank
        self.required = required


class NonConvergence(DressError, ArithmeticError):
    """Newton iterations stopped without meeting the residual tolerance."""

    exit_code = 2

    def __init__(self, message, residual, iterations, stage=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.stage = stage


class Divergence(DressError, ArithmeticError):
    """The estimating equation has no finite root (e.g. separable logistic data)."""

    exit_code = 2

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class DegenerateTest(DressError, ValueError):
    """A t statistic is undefined because the differences have zero variance."""


class ExperimentUnstable(DressError, RuntimeError):
    exit_code = 2

    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


class IngestError(DressError, ValueError):
    exit_code = 66

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


# Solver errors that a Monte Carlo replication may record and skip.
SOLVER_ERRORS = (SingularSystem, NonConvergence, Divergence, RankDeficient)
