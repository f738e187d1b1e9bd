#!/usr/bin/env python3
"""Exact counter-wrap arithmetic for a 10 Gbps link polled every 300 s."""
from fractions import Fraction

interval = 300
true_bytes = 1_250_000_000 * interval          # 3.75e11
wrapped = true_bytes % 2**32
estimate = Fraction(wrapped * 8, interval)
ceiling = Fraction(2**32 * 8, interval)
true_rate = Fraction(true_bytes * 8, interval)
print("interval bytes", true_bytes, "mod 2^32 =", wrapped)
print("estimate bits/s", estimate, float(estimate))
print("ceiling bits/s", ceiling, float(ceiling))
print("underestimate factor", float(true_rate / estimate), "ceiling factor", float(true_rate / ceiling))
print("wrap example", ((2**32 - 100 + 150) % 2**32), Fraction(((50 - (2**32 - 100)) % 2**32) * 8, 300))
