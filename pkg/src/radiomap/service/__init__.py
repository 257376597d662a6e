"""HTTP service wrapping the estimators and run commands."""
from .app import create_app

__all__ = ["create_app"]
