"""
Property-based tests for FM-DAS
"""
