"""
Unit tests for the compressive print inspection pipeline
"""
