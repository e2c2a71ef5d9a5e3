"""Figure rendering for sparsemom experiment artifacts (display only)."""

__version__ = "0.1.0"
