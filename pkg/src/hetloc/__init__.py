"""Deep-learning RSS fingerprint localization across heterogeneous phones."""

__version__ = "0.1.0"
