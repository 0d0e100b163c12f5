"""Error taxonomy shared across the toolkit.

ConfigError and DataError map onto the CLI exit codes (2 and 3). Everything
else is a plain ValueError and indicates a programming error at a call site.
"""


class ConfigError(ValueError):
    """Invalid run configuration (bad key, malformed value, violated invariant)."""


class DataError(ValueError):
    """Invalid input data (broken file, unsupported content, out-of-range value)."""


class PlySchemaError(DataError):
    """A PLY file does not match the expected Gaussian checkpoint layout."""


class UnsupportedCameraModel(DataError):
    """A camera model other than PINHOLE or SIMPLE_PINHOLE was encountered."""

    def __init__(self, model: str):
        super().__init__(f"unsupported camera model: {model}")
        self.model = model
