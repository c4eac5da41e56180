"""Independent reference computations used to freeze expected values."""

import numpy as np


def primes_by_trial_division(limit):
    primes = []
    for k in range(2, limit + 1):
        if all(k % p for p in primes if p * p <= k):
            primes.append(k)
    return primes


def mobius_scalar(n):
    result, m, p = 1, n, 2
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            result = -result
        p += 1
    return -result if m > 1 else result


def mobius_trial_division(lo, hi):
    """mu on [lo, hi] by dividing out every prime up to sqrt(hi)."""
    n = np.arange(lo, hi + 1, dtype=np.int64)
    rest = n.copy()
    mu = np.ones(n.shape, dtype=np.int64)
    for p in primes_by_trial_division(int(hi**0.5) + 1):
        hit = rest % p == 0
        mu[hit] *= -1
        rest[hit] //= p
        mu[hit & (rest % p == 0)] = 0
    mu[rest > 1] *= -1
    return mu
