"""Tests for cryptojudge."""
