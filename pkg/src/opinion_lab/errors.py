"""Exception hierarchy shared by all opinion_lab modules."""


class OpinionLabError(Exception):
    """Base class; the CLI turns any subclass into an error JSON."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class NonPositiveParameter(OpinionLabError, ValueError):
    code = "non_positive_parameter"


class DimensionMismatch(OpinionLabError, ValueError):
    code = "dimension_mismatch"


class IndexOutOfRange(OpinionLabError, IndexError):
    code = "index_out_of_range"


class StepUnderflow(OpinionLabError, RuntimeError):
    code = "step_underflow"


class InsufficientData(OpinionLabError, ValueError):
    code = "insufficient_data"


class NoConvergence(OpinionLabError, RuntimeError):
    code = "no_convergence"


class AssumptionViolated(OpinionLabError, ValueError):
    code = "assumption_violated"


class NotAnEquilibrium(OpinionLabError, ValueError):
    code = "not_an_equilibrium"


class MinimizationFailed(OpinionLabError, RuntimeError):
    code = "minimization_failed"


class NotConsensusEligible(OpinionLabError, ValueError):
    code = "not_consensus_eligible"


class ParseError(OpinionLabError, ValueError):
    code = "parse_error"

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)

    def to_dict(self):
        d = super().to_dict()
        d["line"] = self.line
        d["field"] = self.field
        return d


class ValidationError(OpinionLabError, ValueError):
    code = "validation_error"

    def __init__(self, message, field=None, agent=None):
        self.field = field
        self.agent = agent
        super().__init__(message)

    def to_dict(self):
        d = super().to_dict()
        d["field"] = self.field
        d["agent"] = self.agent
        return d
