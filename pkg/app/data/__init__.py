"""
World model, scenario files and bundled canonical worlds.
"""
