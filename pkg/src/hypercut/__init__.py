"""Blur-to-video laboratory: unsupervised sequence ordering by hyperplane
separation, order-regularized multi-frame deblurring, synthetic data, and
paired-camera post-processing.

Kept import-light on purpose: the CLI needs to cap BLAS threads (via the
HYPERCUT_THREADS environment variable) before numpy is first imported.
"""

__version__ = "0.1.0"
