"""Exception hierarchy. Every error raised by the library derives from ScaleLabError."""


class ScaleLabError(Exception):
    """Base class for data and fitting errors (CLI exit code 2)."""


class InvariantViolation(ScaleLabError):
    def __init__(self, field: str, detail: str = "", run_id: str | None = None):
        self.field = field
        self.run_id = run_id
        msg = f"invalid {field!r}"
        if run_id is not None:
            msg += f" in run {run_id!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class EmptyDataset(ScaleLabError):
    pass


class DuplicateRun(ScaleLabError):
    pass


class TooFewPoints(ScaleLabError):
    pass


class NonFiniteObjective(ScaleLabError):
    pass


class AllInitsFailed(ScaleLabError):
    pass


class InvalidFit(ScaleLabError):
    pass


class DegenerateGrid(ScaleLabError):
    pass


class SingularRelation(ScaleLabError):
    pass


class EmptySeries(ScaleLabError):
    pass


class DegenerateSparsity(ScaleLabError):
    pass


class EmptyExpert(ScaleLabError):
    pass


class AllExpertsEmpty(ScaleLabError):
    pass


class ZeroVariance(ScaleLabError):
    pass


class ParseError(ScaleLabError):
    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class SchemaMismatch(ScaleLabError):
    pass


class BootstrapFailed(ScaleLabError):
    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        super().__init__(f"bootstrap iteration {iteration}: {cause}")
