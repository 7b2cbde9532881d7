from enum import StrEnum

from pydantic_core import ErrorDetails


class L0CertErrorType(StrEnum):
    INVALID_DOMAIN = "invalid_domain"
    SHAPE_MISMATCH = "shape_mismatch"
    CAP_EXCEEDED = "cap_exceeded"
    INVALID_PARAMETER = "invalid_parameter"
    MODEL_FORMAT = "model_format"
    MISCLASSIFIED_INPUT = "misclassified_input"


class L0CertError(Exception):
    def __init__(self, *, error_type: L0CertErrorType, message: str) -> None:
        self.error_type = error_type
        self.message = message
        super().__init__(f"l0cert error ({error_type}): {message}")


class InvalidDomainError(L0CertError):
    def __init__(self, *, message: str) -> None:
        super().__init__(error_type=L0CertErrorType.INVALID_DOMAIN, message=message)


class ShapeMismatchError(L0CertError):
    def __init__(self, *, expected: object, actual: object, what: str = "shape") -> None:
        self.expected = expected
        self.actual = actual
        super().__init__(
            error_type=L0CertErrorType.SHAPE_MISMATCH, message=f"{what} mismatch: expected {expected}, got {actual}"
        )


class CapExceededError(L0CertError):
    def __init__(self, *, what: str, count: int, cap: int) -> None:
        self.count = count
        self.cap = cap
        super().__init__(
            error_type=L0CertErrorType.CAP_EXCEEDED, message=f"{what} count {count} exceeds the cap of {cap}"
        )


class InvalidParameterError(L0CertError):
    def __init__(self, *, message: str) -> None:
        super().__init__(error_type=L0CertErrorType.INVALID_PARAMETER, message=message)


class ModelFormatError(L0CertError):
    def __init__(self, *, message: str, errors: list[ErrorDetails] | None = None) -> None:
        self.errors = errors or []
        if self.errors:
            paths = "; ".join(
                f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}" for error in self.errors
            )
            message = f"{message}. Errors: {paths}"

        super().__init__(error_type=L0CertErrorType.MODEL_FORMAT, message=message)


class MisclassifiedInputError(L0CertError):
    def __init__(self, *, label: int, predicted: int) -> None:
        self.label = label
        self.predicted = predicted
        super().__init__(
            error_type=L0CertErrorType.MISCLASSIFIED_INPUT,
            message=f"Center is classified as {predicted}, not as the claimed label {label}",
        )
