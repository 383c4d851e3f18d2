"""Pixel-based language encoding toolkit.

Text is rasterized into 16x16 patches, a masked autoencoder learns to
reconstruct hidden patch pixels, and small heads finetune the encoder for
tagging, parsing, classification, and extractive QA. Includes an
orthographic-attack harness and a renderer benchmark.
"""

__version__ = "0.1.0"
