"""Test suite for Skyfog."""
