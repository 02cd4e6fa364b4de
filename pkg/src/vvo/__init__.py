"""Object-centric learning on frozen shared features with quantized reconstruction targets."""

__version__ = "0.1.0"
