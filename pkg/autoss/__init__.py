
"""
Authenticated outsourced string similarity search.

Sub-packages are imported by path, e.g.:
    from autoss.core.config import logger
"""

__all__ = [
    "main",
    "core",
    "domain",
    "index",
    "auth",
    "embedding",
    "query",
    "harness",
    "results",
    "cli",
]
