"""Quantum GAN with a mutual-information term, simulated with numpy."""

__version__ = "0.1.0"
