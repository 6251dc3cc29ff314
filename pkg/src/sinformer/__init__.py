"""SinFormer: multi-scale transformer for RF fingerprint identification.

Self-contained research package: a numpy-backed autodiff engine, a
synthetic emitter/channel simulator with a bit-exact dataset container,
the SinFormer encoder with two-stage training, evaluation metrics and a
batch CLI.
"""

__version__ = "0.1.0"
