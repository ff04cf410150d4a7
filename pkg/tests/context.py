# -*- coding: utf-8 -*-

import os
import sys
import tempfile

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

# keep test runs and their log files out of the project's runs/ directory
os.environ.setdefault("LADG_OUTPUT_DIR", tempfile.mkdtemp(prefix="ladg-tests-"))

import ladgpy  # noqa: E402
from ladgpy.config import ACCEPTANCE_ENV_VAR  # noqa: E402

requires_acceptance = pytest.mark.skipif(
    os.environ.get(ACCEPTANCE_ENV_VAR) != "1",
    reason=f"long study, set {ACCEPTANCE_ENV_VAR}=1 to run",
)


def numeric_gradient(fn, value: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a matrix"""
    grad = np.zeros_like(value)
    for index in np.ndindex(*value.shape):
        plus, minus = value.copy(), value.copy()
        plus[index] += step
        minus[index] -= step
        grad[index] = (fn(plus) - fn(minus)) / (2.0 * step)
    return grad


def check_gradient(build, value, rtol: float = 1e-4, atol: float = 1e-7):
    """Compare the tape gradient of `build(leaf)` with finite differences"""
    from ladgpy.numerics import backward, constant, parameter

    value = np.asarray(value, dtype=np.float64)
    leaf = parameter(value)
    backward(build(leaf))
    numeric = numeric_gradient(lambda v: build(constant(v)).item(), value)
    np.testing.assert_allclose(leaf.grad, numeric, rtol=rtol, atol=atol)
    return leaf.grad
