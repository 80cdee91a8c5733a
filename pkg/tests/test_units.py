import math

import numpy as np
import pytest

from isaclearn.units import db_to_linear, linear_to_db, dbw_to_watts, dbm_to_watts


def test_db_to_linear_known_values():
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(10.0) == pytest.approx(10.0, rel=1e-14)
    assert db_to_linear(5.0) == pytest.approx(3.1622776601683795, rel=1e-14)
    assert db_to_linear(-3.0) == pytest.approx(0.5011872336272722, rel=1e-14)


def test_linear_to_db_inverts():
    for v in (1e-12, 0.5, 1.0, 7.3, 1e7):
        assert linear_to_db(db_to_linear(linear_to_db(v))) == pytest.approx(
            linear_to_db(v), abs=1e-12)


def test_dbw_and_dbm_offset():
    # 0 dBW is one watt; 0 dBm is one milliwatt.
    assert dbw_to_watts(0.0) == 1.0
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-14)
    assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-14)
    # the noise floor used throughout the experiments
    assert dbm_to_watts(-94.0) == pytest.approx(10 ** (-12.4), rel=1e-14)
    assert dbm_to_watts(-70.0) == pytest.approx(1e-10, rel=1e-14)


def test_array_inputs_pass_through():
    arr = np.array([0.0, 10.0, 20.0])
    assert np.allclose(db_to_linear(arr), [1.0, 10.0, 100.0], rtol=1e-14)
    assert np.allclose(linear_to_db(db_to_linear(arr)), arr, atol=1e-12)
