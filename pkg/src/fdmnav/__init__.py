"""fdmnav: learned forward dynamics + sampling MPC navigation stack."""

__version__ = "0.1.0"
