"""Tests for src/galerkin module."""
