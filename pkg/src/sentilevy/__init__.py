"""Sentiment-memory jump diffusion with unscented Kalman filtering."""

__version__ = "0.1.0"
