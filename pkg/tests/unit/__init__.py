"""
Unit tests for FM-DAS
"""
