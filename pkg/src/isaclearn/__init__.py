"""Learned dual-function precoding for joint communication and sensing.

The package trains a small column-shared network that maps raw uplink pilot
and radar echo observations straight to a downlink transmit matrix, skipping
explicit channel estimation, and ships the classical two-stage baselines
(least-squares channels, spectrum-peak angles, penalty-ascent precoder
optimization) it is measured against.
"""

__version__ = "0.1.0"
