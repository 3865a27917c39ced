"""LQG/LTR control of an acoustically deflected Coanda jet, in simulation."""

__version__ = "0.1.0"
