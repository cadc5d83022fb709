"""
Errors, settings, predicates, export and logging helpers.
"""
