"""Rate-distortion regions for cascade, triangular and two-way source coding
with degraded side information, plus a random-binning achievability simulator."""

__version__ = "0.1.0"
