"""Unpaired learning of camera-specific image distortions.

Subpackages:
    autodiff    reverse-mode tape, tensor ops, Adam
    nets        declarative conv-net specs, analysis, and instantiation
    distortion  blur / noise / JPEG degradations and camera presets
    jpegcodec   self-contained baseline JPEG encoder/decoder
    cyclegan    unpaired image-to-image training loop
    harness     synthetic domain-adaptation study
    ppm         binary PPM image I/O
"""

__version__ = "0.1.0"
