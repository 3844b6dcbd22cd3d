#!/usr/bin/env python3
"""Regenerate the frozen ReLU polyfit(3) coefficients.

Least-squares degree-3 fit of max(0, x) on 1001 evenly spaced points over
[-3, 3]. Writes src/hdcos/resources/relu_polyfit3.json.
"""
import json
from pathlib import Path

import numpy as np

LO, HI, POINTS, DEGREE = -3.0, 3.0, 1001, 3


def fit():
    x = np.linspace(LO, HI, POINTS)
    vander = np.vander(x, DEGREE + 1, increasing=True)
    coeffs, *_ = np.linalg.lstsq(vander, np.maximum(0.0, x), rcond=None)
    return coeffs


def main():
    coeffs = fit()
    out = Path(__file__).resolve().parents[1] / "src" / "hdcos" / "resources" / "relu_polyfit3.json"
    doc = {
        "interval": [LO, HI],
        "points": POINTS,
        "degree": DEGREE,
        "coefficients": [repr(float(c)) for c in coeffs],
    }
    out.write_text(json.dumps(doc, indent=2) + "\n")
    print(out, doc["coefficients"])


if __name__ == "__main__":
    main()
