"""Exception hierarchy.

Errors split into two families: problems with the input data (bad files,
invalid datasets) and failures of a pipeline stage on otherwise valid data.
The CLI maps the first family to exit code 3 and the second to 4.
"""


class IdentikError(Exception):
    """Base class for every error raised by this package."""


class DataError(IdentikError):
    """Input files or records are malformed."""


class PipelineError(IdentikError):
    """A computation could not be carried out on the given inputs."""


class MalformedHeader(DataError):
    pass


class BadRow(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class MalformedEmbeddings(DataError):
    pass


class BadMagic(MalformedEmbeddings):
    pass


class TruncatedFile(MalformedEmbeddings):
    pass


class NonFiniteValue(MalformedEmbeddings):
    def __init__(self, index: int):
        super().__init__(f"non-finite value at flat index {index}")
        self.index = index


class InvalidDataset(DataError):
    def __init__(self, report):
        super().__init__(report.summary())
        self.report = report


class DimensionMismatch(PipelineError):
    pass


class ZeroNorm(PipelineError):
    pass


class InsufficientIdentities(PipelineError):
    def __init__(self, group: str, have: int, need: int):
        super().__init__(f"group {group!r} has {have} eligible identities, need {need}")
        self.group = group
        self.have = have
        self.need = need


class EmptyInput(PipelineError):
    pass


class DegenerateDistributions(PipelineError):
    pass


class NoMatedProbes(PipelineError):
    pass


class Unachievable(PipelineError):
    pass


class BadDimensions(PipelineError):
    pass
