"""Multiplication bookkeeping for the cost comparisons.

Every inner product that counts toward test-time complexity is routed
through a :class:`MultiplyCounter`, so reported budgets are measured from
the array shapes actually contracted rather than derived from a formula.
"""

import numpy as np


def _einsum_multiplies(subscripts, operands):
    inputs = subscripts.replace(" ", "").split("->")[0].split(",")
    sizes = {}
    for spec, op in zip(inputs, operands):
        for letter, n in zip(spec, np.shape(op)):
            sizes[letter] = n
    total = 1
    for n in sizes.values():
        total *= n
    return total


class MultiplyCounter:
    """Tally of scalar multiplications spent in counted products."""

    def __init__(self):
        self.count = 0

    def matmul(self, a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        out = a @ b
        self.count += int(a.shape[-1]) * int(np.size(out))
        return out

    def einsum(self, subscripts, *operands):
        # naive two-operand contraction: one multiply per index tuple
        self.count += _einsum_multiplies(subscripts, operands)
        return np.einsum(subscripts, *operands)

    def reset(self):
        self.count = 0
