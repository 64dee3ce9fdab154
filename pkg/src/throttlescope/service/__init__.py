from .app import app, create_app
from .handlers import PipelineError

__all__ = ["app", "create_app", "PipelineError"]
