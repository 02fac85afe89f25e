"""Exception hierarchy shared by the analysis pipeline and the CLI."""


class DaeStructError(Exception):
    """Base class for all pipeline errors.

    ``code`` is the machine-readable tag written into CLI error reports and
    ``exit_code`` the process status the CLI returns for it.
    """

    code = "error"
    exit_code = 1

    def to_json(self) -> dict:
        return {"error": self.code, "message": str(self)}


class ParseError(DaeStructError):
    code = "parse_error"
    exit_code = 2

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")

    def to_json(self) -> dict:
        report = super().to_json()
        report.update(line=self.line, column=self.column)
        return report


class UndeclaredIdentifier(ParseError):
    code = "undeclared_identifier"


class NonSquareSystem(DaeStructError):
    code = "non_square"
    exit_code = 3


class StructurallySingular(DaeStructError):
    code = "structurally_singular"
    exit_code = 3


class NotQuasiTriangular(DaeStructError):
    code = "not_quasi_triangular"
    exit_code = 3


class NumericError(DaeStructError):
    code = "numeric_failure"
    exit_code = 4


class EvaluationError(NumericError):
    code = "evaluation_error"


class MissingAssignment(EvaluationError):
    code = "missing_assignment"


class DomainError(EvaluationError):
    code = "domain_error"


class NonConvergence(NumericError):
    """The offset fixed-point iteration ran past its round bound."""

    code = "offsets_non_convergence"


class StageError(NumericError):
    def __init__(self, message: str, stage: int):
        self.stage = stage
        super().__init__(f"stage {stage}: {message}")

    def to_json(self) -> dict:
        report = super().to_json()
        report["stage"] = self.stage
        return report


class NoConvergence(StageError):
    code = "no_convergence"


class SingularStage(StageError):
    code = "singular_stage"


class VerificationMismatch(DaeStructError):
    code = "verification_mismatch"
    exit_code = 5
