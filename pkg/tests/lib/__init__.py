"""Tests for lib modules."""
