"""Reference completion server speaking the chaitea wire protocol."""
from .server import AdapterConfig, InferenceEngine, build_app, load_model

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "InferenceEngine", "build_app", "load_model"]
