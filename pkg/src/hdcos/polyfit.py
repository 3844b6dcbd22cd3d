"""Frozen degree-3 polynomial stand-in for ReLU, shared by training and MPC."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np


@lru_cache(maxsize=None)
def load_fixture() -> dict:
    text = resources.files("hdcos.resources").joinpath("relu_polyfit3.json").read_text()
    return json.loads(text)


def relu_polyfit3_coeffs() -> tuple[float, float, float, float]:
    """(c0, c1, c2, c3) with p(x) = c0 + c1 x + c2 x^2 + c3 x^3."""
    return tuple(float(c) for c in load_fixture()["coefficients"])


def polyval(coeffs, x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for c in reversed(coeffs):
        out = out * x + c
    return out


def polyder_val(coeffs, x):
    return polyval([k * c for k, c in enumerate(coeffs)][1:], x)
