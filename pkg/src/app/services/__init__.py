"""
Services package for core functionality
"""
