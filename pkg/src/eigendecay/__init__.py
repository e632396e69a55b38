"""Dense MLP training with a dominant-eigenvalue weight regularizer and a
numerical verification suite for the associated classification-margin bound."""

__version__ = "0.1.0"
