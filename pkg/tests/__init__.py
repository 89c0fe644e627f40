"""Tests for ssm-state-tracking."""
