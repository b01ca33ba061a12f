"""Scaling-law toolkit for auditing, optimizing and gating agent skill libraries."""

from __future__ import annotations

__version__ = "0.1.0"
