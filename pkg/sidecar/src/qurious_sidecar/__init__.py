"""HTTP sentence-embedding sidecar speaking the qurious /embed protocol."""

from .encoders import EncoderLoadError, LexicalEncoder, SidecarConfig, TransformerEncoder, load_encoder
from .service import create_app

__version__ = "0.1.0"

__all__ = [
    "EncoderLoadError",
    "LexicalEncoder",
    "SidecarConfig",
    "TransformerEncoder",
    "create_app",
    "load_encoder",
]
