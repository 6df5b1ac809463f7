"""Highway trajectory prediction with a from-scratch LSTM network."""

__version__ = "0.1.0"
