"""Exception types shared across the package."""


class LantestError(Exception):
    """Base class for runtime model/estimation errors (CLI exit code 3)."""


class ConfigError(LantestError):
    """Invalid configuration or flags (CLI exit code 2)."""


class NonstationaryModel(ConfigError):
    pass


class ScaleNotPositive(LantestError):
    pass


class InvalidScaleShift(LantestError):
    pass


class SingularDesign(LantestError):
    pass


class GradientTooSmall(LantestError):
    """Raised when the central-sequence gradient is (numerically) zero."""


class NegativeTau2(LantestError):
    pass


class NonpositiveTau2(LantestError):
    pass
