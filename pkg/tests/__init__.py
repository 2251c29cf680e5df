"""
Tests for FM-DAS
"""
