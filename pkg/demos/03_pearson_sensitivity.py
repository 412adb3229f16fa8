"""One changed record can move a binary Pearson correlation by a constant.

x and y each hold a single 1 in row 0, so r(x, y) = 1.  Set one more entry
of x to 1 and r falls towards 1/sqrt(2) however large n is.  That is why
the correlations are not released directly: the noise would swamp them.
The two-way counts they are built from have sensitivity 2 instead.
"""
from __future__ import annotations

import math

from dpgc.privacy import sensitivity_demo

print(f"{'n':>9} {'r before':>9} {'r after':>9} {'change':>9}")
for n in (4, 10, 100, 10_000, 1_000_000):
    r1, r2, gap = sensitivity_demo(n)
    print(f"{n:>9} {r1:>9.6f} {r2:>9.6f} {gap:>9.6f}")
print(f"limit of the change: 1 - 1/sqrt(2) = {1 - 1 / math.sqrt(2):.6f}")
