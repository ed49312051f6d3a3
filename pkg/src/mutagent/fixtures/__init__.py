"""Bundled fixture data: the demo subject project."""

from pathlib import Path


def demo_project_path() -> Path:
    """Directory of the bundled ~25-line demo subject project."""
    return Path(__file__).resolve().parent / "demo_project"
