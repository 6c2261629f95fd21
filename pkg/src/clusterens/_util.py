"""Seed mixing and compensated summation helpers."""

import math

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One round of the SplitMix64 finalizer on a 64-bit integer."""
    z = (int(x) + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(master, *indices):
    """Derive a child seed from a master seed and a path of indices.

    Each index is folded in with a SplitMix64 round, so the result does
    not depend on how many other children were derived.
    """
    h = splitmix64(int(master) & _MASK64)
    for idx in indices:
        h = splitmix64(h ^ (int(idx) & _MASK64))
    return h


def make_rng(seed, *indices):
    return np.random.Generator(np.random.PCG64(mix_seed(seed, *indices)))


def fsum(values):
    """Exactly rounded float sum (order independent)."""
    return math.fsum(float(v) for v in values)


def fmean(values):
    values = list(values)
    if not values:
        raise ValueError("mean of empty sequence")
    return math.fsum(values) / len(values)


class KahanAccumulator:
    """Neumaier-compensated running sum over equally shaped arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, x):
        x = np.asarray(x, dtype=float)
        t = self.total + x
        big = np.abs(self.total) >= np.abs(x)
        self.comp += np.where(big, (self.total - t) + x, (x - t) + self.total)
        self.total = t

    def value(self):
        return self.total + self.comp
