"""Unit tests for nioperator."""
