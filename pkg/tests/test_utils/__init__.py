"""Tests for src/utils module."""
