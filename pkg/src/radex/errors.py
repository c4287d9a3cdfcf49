"""Exception hierarchy shared by all radex modules."""


class RadexError(Exception):
    """Base class for every error raised by this package."""


class DataError(RadexError):
    """Input data is malformed or inconsistent."""


class EmptyInput(DataError):
    pass


class DuplicateSection(DataError):
    def __init__(self, section: str):
        super().__init__(f"section {section!r} appears more than once")
        self.section = section


class ParseError(DataError):
    def __init__(self, line: int, message: str = "malformed record"):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateId(DataError):
    def __init__(self, report_id: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate report id {report_id!r}{where}")
        self.report_id = report_id
        self.line = line


class EmptyCorpus(DataError):
    pass


class MismatchedReport(DataError):
    pass


class DimensionMismatch(DataError):
    def __init__(self, line: int, expected: int, got: int):
        super().__init__(f"line {line}: expected {expected} floats, got {got}")
        self.line = line


class EmptyFile(DataError):
    pass


class EmptySequence(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class ModelFormatError(DataError):
    pass


class InvalidOrder(DataError):
    pass


class EmptyReference(DataError):
    pass


class EmptyGold(DataError):
    pass


class EmptyPathologyList(DataError):
    pass


class UnknownFormat(DataError):
    pass


class EndpointUnreachable(RadexError):
    pass


class MalformedResponse(RadexError):
    def __init__(self, report_id: str, message: str = "response lacks a 'terms' list"):
        super().__init__(f"report {report_id!r}: {message}")
        self.report_id = report_id
