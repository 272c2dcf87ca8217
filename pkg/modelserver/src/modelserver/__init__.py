"""Inference sidecar: image, text, and segmentation endpoints over HTTP/JSON."""

__version__ = "0.1.0"
