"""Integration tests for the nioperator command line and pipelines."""
