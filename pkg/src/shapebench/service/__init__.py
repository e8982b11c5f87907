"""HTTP service exposing the pipeline; the CLI drives it in-process."""

from .app import create_app

__all__ = ["create_app"]
