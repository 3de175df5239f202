"""flatpath: heat kernels, holomorphic quantization and sliced path integrals on flat space forms."""

__version__ = "0.1.0"
SCHEMA_VERSION = 1
