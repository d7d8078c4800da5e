"""Tests for otdr-guard."""
