"""Exception hierarchy shared by all modules."""


class MultiresError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(MultiresError, ValueError):
    pass


class InvalidCutoffError(InvalidInputError):
    pass


class ParseError(MultiresError, ValueError):
    """Malformed input text; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(MultiresError, ValueError):
    pass


class NotFoundError(MultiresError, FileNotFoundError):
    pass


class UnsupportedFormatError(MultiresError, ValueError):
    pass


class DecodeError(MultiresError, ValueError):
    pass


class CapViolationError(MultiresError, ValueError):
    """Too many detections for one (image_id, model_tag) pair."""

    def __init__(self, image_id, model_tag, count, cap):
        super().__init__(
            f"{count} detections for image {image_id!r}, model {model_tag!r} "
            f"exceed the cap of {cap}"
        )
        self.image_id = image_id
        self.model_tag = model_tag
        self.count = count
        self.cap = cap
