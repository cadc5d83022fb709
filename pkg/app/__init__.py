"""
Inverse planning for time-inconsistent agents in restaurant gridworlds.
"""

__version__ = "1.0.0"
