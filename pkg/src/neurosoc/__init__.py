"""Biomarker extraction, NeuralTree classification and mixed-signal loop models
for a closed-loop neuromodulation SoC, in bit-accurate software form."""

__version__ = "0.1.0"
