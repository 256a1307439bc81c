"""
ProtoQuad: weighted training-set prototypes that explain a model's behaviour on test data.
"""

__version__ = "0.1.0"

from .facade import ProtoQuad

__all__ = ["ProtoQuad"]
