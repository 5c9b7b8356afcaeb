"""
CLI package initialization.
"""
