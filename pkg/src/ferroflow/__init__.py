"""2D finite-element simulator for micropolar ferrofluid flow."""

__version__ = "0.1.0"
