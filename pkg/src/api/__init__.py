"""
Brinkman Averaging API Module

FastAPI service for the validation suites, the resolvent corrector check
and sweep reports.
"""

from .api import app

__all__ = ['app']
