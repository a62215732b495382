"""Dataset converters emitting the canonical monitoring window JSONL."""

__version__ = "0.1.0"

from .canonical import AdapterManifest
from .cli import convert

__all__ = ["AdapterManifest", "convert", "__version__"]
