"""Noise-invariant acoustic classification via adversarial domain confusion.

A compact, dependency-light toolkit around one idea: train a frame
classifier whose shared encoder is pushed, by an adversarial domain
discriminator, toward representations that work in acoustic conditions it
never saw.  Ships a synthetic multi-condition corpus generator, the
feature pipeline, the trainer, a noise-count sweep harness, and a CLI.
"""

from invnet.backend import active_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "__version__"]
