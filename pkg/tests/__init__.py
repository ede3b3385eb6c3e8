"""
Brinkman averaging test suite
Tests for the Galerkin core, fast process, solvers, harness, API and CLI
"""
