"""Tests for src/api module."""
