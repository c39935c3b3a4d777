"""Main FastAPI application."""

from fastapi import FastAPI

from src import __version__
from src.config import get_settings
from src.routes import router

settings = get_settings()

app = FastAPI(
    title="Interaction Inspection API",
    description="""
# Two-person interaction inspection

Serves a trained checkpoint and exposes, for a posted skeleton clip:

- the predicted interaction class
- per-person joint amplitudes, selection thresholds and active joints
- cross-person attention weights between active joints, frame by frame

Set `ASEA_MODEL_PATH` to the checkpoint manifest (`model.json`) to serve.
""",
    version=__version__,
    docs_url="/api/docs",
    redoc_url="/api/redoc",
    openapi_url="/api/openapi.json",
)

app.include_router(router, prefix="/api/v1", tags=["inspection"])


@app.get("/")
def root() -> dict:
    """Root endpoint with service information."""
    return {
        "name": "asea-interaction",
        "version": __version__,
        "model_path": settings.model_path,
        "documentation": {
            "swagger_ui": "/api/docs",
            "redoc": "/api/redoc",
            "openapi_json": "/api/openapi.json",
        },
    }


@app.get("/health", tags=["health"])
def health_check() -> dict:
    """Health check endpoint."""
    return {"status": "healthy", "version": __version__}
