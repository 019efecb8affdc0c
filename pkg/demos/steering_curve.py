"""Unsteerability certificates along the isotropic family.

For each p the SDP is run with a growing pool of Haar-rotated components;
the first pool size that certifies is printed.
"""
import numpy as np

from bellnc.certify_steering import certification_curve
from bellnc.quantum import isotropic

sizes = [0, 50, 200, 500]
for p in np.arange(0.30, 0.56, 0.05):
    curve = certification_curve(isotropic(p), sizes, seed=1)
    first = next((n for n, s in curve if s == "certified-unsteerable"), None)
    print(f"p={p:.2f}: " + ("not certified up to n=500" if first is None else f"certified at n={first}"))
