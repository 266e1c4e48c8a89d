"""Social recommendation toolkit: backbones, similarity distillation,
diversity metrics and re-ranking."""

__version__ = "0.1.0"
