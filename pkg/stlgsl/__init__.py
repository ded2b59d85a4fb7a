"""
ST-LGSL Traffic Forecaster
Latent graph structure learning with gated TCN and diffusion convolutions
"""

__version__ = "1.0.0"
