"""Sampled-data stabilizer app package."""

from app.config import ARTIFACT_VERSION

__version__ = ARTIFACT_VERSION
