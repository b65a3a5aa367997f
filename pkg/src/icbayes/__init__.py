"""In-context Bayesian posterior sampling via conditional flow matching."""

__version__ = "0.1.0"
