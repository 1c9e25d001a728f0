class CvlocError(Exception):
    exit_code = 2


class ConfigError(CvlocError):
    exit_code = 1


class UsageError(CvlocError):
    exit_code = 1


# --- data / format problems (exit 2) ---

class DataError(CvlocError):
    exit_code = 2


class ShapeError(DataError):
    pass


class GeometryError(DataError):
    pass


class FormatError(DataError):
    def __init__(self, message: str, offset: int, path: str | None = None):
        where = f"{path} @ byte {offset}" if path else f"byte {offset}"
        super().__init__(f"{where}: {message}")
        self.offset = offset
        self.path = path


# --- numerical degeneracy (exit 3) ---

class NumericalError(CvlocError):
    exit_code = 3


class NoSupportError(NumericalError):
    pass


class RotationIndeterminateError(NumericalError):
    pass


class ConditioningError(NumericalError):
    pass


class DegenerateInputError(NumericalError):
    pass
