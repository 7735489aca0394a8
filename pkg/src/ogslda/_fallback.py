"""Pure numpy versions of the compiled kernels.

Results are bit-identical to ``_kernels``: counts are small integers and
the L1 sums use ``cumsum`` so accumulation runs strictly left to right.
"""
import numpy as np


def transition_counts(codes, n):
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= n):
        raise IndexError("opcode code out of range")
    if codes.size < 2:
        return np.zeros((n, n), dtype=np.float64)
    flat = codes[:-1] * n + codes[1:]
    return np.bincount(flat, minlength=n * n).astype(np.float64).reshape(n, n)


def pairwise_l1(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[1] != y.shape[1]:
        raise ValueError("row length mismatch")
    out = np.empty((x.shape[0], y.shape[0]), dtype=np.float64)
    if x.shape[1] == 0:
        out.fill(0.0)
        return out
    for a in range(x.shape[0]):
        out[a] = np.abs(x[a] - y).cumsum(axis=1)[:, -1]
    return out
