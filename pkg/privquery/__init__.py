"""
privquery: private release of classification-query answers.
"""

__version__ = "1.0.0"
