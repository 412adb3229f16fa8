"""Pearson correlation of ranks is sensitive to an arbitrary category order.

Take x = 1..n and reverse the first k = lam*n entries.  The correlation with
the original drops by exactly 2k(k+1)(k-1) / (n(n+1)(n-1)), so relabelling a
categorical attribute can move its correlation with others by a lot.  Dummy
encoding sidesteps the problem: each category is its own 0/1 column.
"""
from __future__ import annotations

from dpgc.evaluate import artificial_order_demo

print(f"{'n':>6} {'lam':>5} {'predicted':>10} {'measured':>10}")
for n in (10, 100, 1000):
    for lam in (0.1, 0.5, 1.0):
        pred, meas = artificial_order_demo(n, lam)
        print(f"{n:>6} {lam:>5} {pred:>10.6f} {meas:>10.6f}")
