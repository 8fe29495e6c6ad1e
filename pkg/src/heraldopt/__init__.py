"""Multi-outcome heralded state engineering in a Gaussian boson sampling device."""

__version__ = "0.1.0"
