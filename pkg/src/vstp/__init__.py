"""Point-conditioned text generation toolkit: sequence codecs, window prompting, metrics and a toy two-stage model."""

__version__ = "0.1.0"
