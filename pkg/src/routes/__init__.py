"""
Command-line routes package
"""
