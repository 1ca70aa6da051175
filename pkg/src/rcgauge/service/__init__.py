"""HTTP service wrapping the pipeline."""

from rcgauge.service.app import create_app

__all__ = ["create_app"]
