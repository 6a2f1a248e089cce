"""HTTP service exposing the kriging pipeline.

Request/response schemas live in ``schemas``; the pure request-to-response
functions in ``ops`` are shared between the FastAPI routes and the CLI's
in-process mode.
"""

from .routes import create_app

__all__ = ["create_app"]
