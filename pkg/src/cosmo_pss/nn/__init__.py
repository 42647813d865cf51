"""Minimal dense neural-network layer set with exact analytic gradients."""

from .layers import (
    Dropout,
    Encoder,
    EncoderLayer,
    FeedForward,
    GELU,
    L2NormalizeRows,
    LayerNorm,
    Linear,
    MultiHeadSelfAttention,
    Param,
    gelu,
    positional_encoding,
    softmax_rows,
    xavier_uniform,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import numerical_gradient, relative_error

__all__ = [
    "Dropout",
    "Encoder",
    "EncoderLayer",
    "FeedForward",
    "GELU",
    "L2NormalizeRows",
    "LayerNorm",
    "Linear",
    "MultiHeadSelfAttention",
    "Param",
    "gelu",
    "positional_encoding",
    "softmax_rows",
    "xavier_uniform",
    "load_checkpoint",
    "save_checkpoint",
    "numerical_gradient",
    "relative_error",
]
