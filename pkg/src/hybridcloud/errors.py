"""Exception hierarchy shared by every hybridcloud module."""


class HybridCloudError(Exception):
    """Base error for the package."""


class CatalogParseError(HybridCloudError):
    pass


class ValidationError(HybridCloudError):
    pass


class CapacityError(ValidationError):
    """Private attributes exceed the private-cloud capacity."""


class CoverageError(ValidationError):
    """A placement plan does not cover the attribute set exactly once."""


class DomainError(HybridCloudError):
    pass


class UnsupportedDatatypeError(HybridCloudError):
    pass


class QuerySyntaxError(HybridCloudError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnsupportedFeatureError(HybridCloudError):
    def __init__(self, construct: str, detail: str = ""):
        self.construct = construct
        msg = f"unsupported SQL feature: {construct}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class BindError(HybridCloudError):
    """A query references something the catalog does not define."""


class UnsupportedPredicateError(HybridCloudError):
    pass


class MissingStatisticsError(HybridCloudError):
    pass


class KeyLengthError(HybridCloudError):
    pass


class DecryptionError(HybridCloudError):
    pass


class PlacementMismatchError(HybridCloudError):
    pass


class FragmentError(HybridCloudError):
    pass


class InstanceTooLargeError(HybridCloudError):
    pass


class CalibrationError(HybridCloudError):
    pass
