"""Tests for src/stochastic module."""
