"""Test suite for the nioperator package."""
