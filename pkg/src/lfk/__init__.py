"""Delimited control with control/prompt: a direct-style interpreter,
trail type systems (original and fine-grained), full and selective CPS
translations, and a differential-testing harness.
"""

__version__ = "0.1.0"
