"""
DDMP test suite
"""
