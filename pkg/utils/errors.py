# utils/errors.py

class TextSemiSegError(Exception):
    """Custom exception for Text-SemiSeg errors."""
    code = 'E_TSS'


class FormatError(TextSemiSegError):
    """Binary artifact is corrupt, truncated or of the wrong kind."""
    code = 'E_FORMAT'


class ValidationError(TextSemiSegError, ValueError):
    """Input violates a shape, range or consistency requirement."""
    code = 'E_VALIDATION'


class ConfigError(ValidationError):
    """Run configuration is missing, malformed or inconsistent."""
    code = 'E_CONFIG'


class GenerationError(TextSemiSegError):
    """Phantom generation could not place its structures."""
    code = 'E_GENERATION'


class UndefinedMetricError(TextSemiSegError):
    """Surface metric requested on an empty mask."""
    code = 'E_UNDEFINED_METRIC'


class SchemaError(TextSemiSegError):
    """Tabular input lacks required columns."""
    code = 'E_SCHEMA'


class NonFiniteLossError(TextSemiSegError):
    """Training produced a NaN or infinite loss."""
    code = 'E_NONFINITE_LOSS'
