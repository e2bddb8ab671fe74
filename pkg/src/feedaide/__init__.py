"""Server-side engine for model-guided, context-aware in-app feedback flows."""

__version__ = "0.1.0"
