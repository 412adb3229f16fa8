"""How much epsilon each noisy count gets.

Every attribute contributes one marginal and every pair of attributes one
two-way table, so m attributes cost k = m + m(m-1)/2 Laplace mechanisms.
Advanced composition then fixes the per-mechanism epsilon.
"""
from __future__ import annotations

from dpgc.privacy import DEFAULT_DELTA, compose_epsilon, mechanism_count, solve_per_mechanism_epsilon

print(f"target epsilon 1, delta 2^-30 = {DEFAULT_DELTA:.3g}\n")
print(f"{'m':>4} {'k':>6} {'eps_prime':>11} {'composed':>10} {'naive k*eps_prime':>18}")
for m in (9, 14, 27):
    k = mechanism_count(m)
    e = solve_per_mechanism_epsilon(1.0, k, DEFAULT_DELTA)
    print(f"{m:>4} {k:>6} {e:>11.6f} {compose_epsilon(e, k, DEFAULT_DELTA):>10.6f} {k * e:>18.3f}")

# basic composition would instead split the budget k ways
k = mechanism_count(14)
print(f"\nwith basic composition each of the {k} counts would get 1/{k} = {1 / k:.6f}")
