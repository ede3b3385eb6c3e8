"""Tests for src/scripts module."""
