"""
Feed-forward style transfer for rendered frames: training, render-loop
injection and temporal-consistency evaluation.
"""

__version__ = "1.0.0"
