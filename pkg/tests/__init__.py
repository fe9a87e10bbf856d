"""
Tests for persuasion-iv.
"""
