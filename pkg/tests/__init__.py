"""Test suite for AI Trading Bot."""
