"""Exception hierarchy shared by all modules.

Every domain error derives from :class:`LabitsError` so the CLI can map it to
exit code 3 in one place.
"""


class LabitsError(ValueError):
    pass


class MalformedLine(LabitsError):
    def __init__(self, line_number, text=""):
        self.line_number = line_number
        super().__init__(f"malformed event on line {line_number}: {text!r}")


class OutOfBounds(LabitsError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"event {index} lies outside the sensor geometry")


class UnsortedStream(LabitsError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"timestamps decrease at event {index}")


class BadPolarity(LabitsError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"event {index} has polarity outside {{-1, +1}}")


class BadMagic(LabitsError):
    pass


class TruncatedRecord(LabitsError):
    pass


class DegenerateWindow(LabitsError):
    pass


class DegenerateStream(DegenerateWindow):
    pass


class EmptyScene(LabitsError):
    pass


class SceneParseError(LabitsError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class BadThreshold(LabitsError):
    pass


class BadConfig(LabitsError):
    pass


class DimMismatch(LabitsError):
    pass


class NoValidPixels(LabitsError):
    pass


class TauOutOfRange(LabitsError):
    pass


class EmptyIterates(LabitsError):
    pass


class Underdetermined(LabitsError):
    pass
