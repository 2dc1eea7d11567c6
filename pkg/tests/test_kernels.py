"""Backend selection and compiled-vs-fallback agreement."""

import os
import subprocess
import sys

import numpy as np
import pytest

from smoothdef import kernels
from smoothdef import _kernels_py as py

compiled = pytest.importorskip(
    "smoothdef._kernels", reason="compiled kernel extension not built"
)


@pytest.fixture
def plane(rng):
    return np.ascontiguousarray(rng.uniform(size=(14, 14)))


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_median_agreement(plane):
    a = compiled.median_filter(plane, 3)
    b = py.median_filter(plane, 3)
    assert np.abs(a - b).max() <= 1e-12


def test_bilateral_agreement(plane):
    a = compiled.bilateral_filter(plane, 5, 1.5, 0.2)
    b = py.bilateral_filter(plane, 5, 1.5, 0.2)
    assert np.abs(a - b).max() <= 1e-12


def test_nlm_agreement(rng):
    p, s = 1, 2
    h, w = 8, 8
    padded = np.ascontiguousarray(rng.uniform(size=(h + 2 * (s + p), w + 2 * (s + p))))
    kern = np.full((3, 3), 1.0 / 9.0)
    a = compiled.nlm_filter(padded, h, w, p, s, 0.3, kern)
    b = py.nlm_filter(padded, h, w, p, s, 0.3, kern)
    assert np.abs(a - b).max() <= 1e-12


def test_diffusion_agreement(plane):
    for exponential in (True, False):
        a = compiled.diffusion_step(plane, 0.2, 0.25, exponential)
        b = py.diffusion_step(plane, 0.2, 0.25, exponential)
        assert np.abs(a - b).max() <= 1e-12


def test_readonly_input_accepted(plane):
    plane.flags.writeable = False
    compiled.median_filter(plane, 3)
    compiled.diffusion_step(plane, 0.2, 0.25, True)


def test_env_var_forces_python_backend():
    env = dict(os.environ, SMOOTHDEF_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from smoothdef import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
