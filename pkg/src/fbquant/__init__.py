"""Product channel quantization codebooks for limited-feedback MISO links."""
__version__ = "0.1.0"
