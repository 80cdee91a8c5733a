"""Decibel/linear conversions.

Convention used throughout the package: transmit powers are configured in dBW,
noise powers in dBm, and every internal computation runs in linear watts.
Conversions happen once, at the configuration boundary.
"""

import numpy as np


def db_to_linear(x_db):
    """Power ratio from dB."""
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    """dB from a linear power ratio (or watts)."""
    return 10.0 * np.log10(x)


def dbw_to_watts(p_dbw):
    return 10.0 ** (np.asarray(p_dbw, dtype=float) / 10.0)


def dbm_to_watts(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)
