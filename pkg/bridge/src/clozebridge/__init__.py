"""Adapter exposing pretrained models behind the cloze scoring wire protocol."""

from .config import FAMILIES, BridgeConfig
from .scoring import BridgeScorer, PassageTable
from .server import build_app, serve_http, serve_stdio

__version__ = "0.1.0"

__all__ = [
    "FAMILIES",
    "BridgeConfig",
    "BridgeScorer",
    "PassageTable",
    "build_app",
    "serve_http",
    "serve_stdio",
]
