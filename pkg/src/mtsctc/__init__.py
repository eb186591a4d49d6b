"""Multiple-time states, post-selected CTC combs and conversions between them."""

__version__ = "0.1.0"
