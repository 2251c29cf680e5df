"""
Integration tests for FM-DAS
"""
