"""Tests for src/solver module."""
