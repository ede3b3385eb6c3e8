"""Tests for src/harness module."""
