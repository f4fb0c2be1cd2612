"""Requirements-to-road test pipeline over a Vehicle Signal Specification catalog."""

__version__ = "0.1.0"
