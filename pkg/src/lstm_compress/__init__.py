"""From-scratch LSTM sales forecaster and hidden-unit compression sweep."""

__version__ = "0.1.0"
