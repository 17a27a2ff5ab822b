"""
Src package for core functionality
"""
