"""Sparse polynomials in ambient coordinates, with analytic derivatives.

Used as test Hamiltonians: they are cheap to evaluate, smooth, and their
gradient and Hessian are exact, which keeps finite-difference oracles honest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Polynomial:
    """sum_k coeffs[k] * prod_i x_i ** exponents[k, i]."""

    coeffs: np.ndarray
    exponents: np.ndarray  # (n_terms, n_vars) nonnegative ints

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, float)
        self.exponents = np.asarray(self.exponents, int)

    @property
    def n_vars(self):
        return self.exponents.shape[1]

    def __call__(self, x):
        x = np.asarray(x, float)
        powers = x[..., None, :] ** self.exponents
        return np.sum(self.coeffs * np.prod(powers, axis=-1), axis=-1)

    def grad(self, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape)
        for i in range(self.n_vars):
            e = self.exponents[:, i]
            mask = e > 0
            if not np.any(mask):
                continue
            exps = self.exponents[mask].copy()
            exps[:, i] -= 1
            powers = x[..., None, :] ** exps
            out[..., i] = np.sum(
                self.coeffs[mask] * e[mask] * np.prod(powers, axis=-1), axis=-1
            )
        return out

    def partial(self, i):
        """The polynomial d/dx_i of self."""
        e = self.exponents[:, i]
        mask = e > 0
        exps = self.exponents[mask].copy()
        exps[:, i] -= 1
        return Polynomial(self.coeffs[mask] * e[mask], exps)

    def hess(self, x):
        n = self.n_vars
        out = np.zeros(np.shape(x)[:-1] + (n, n))
        for i in range(n):
            pi = self.partial(i)
            if pi.coeffs.size:
                out[..., i, :] = pi.grad(x)
        return out


def random_polynomial(rng, n_vars, degree=3, n_terms=12, scale=1.0):
    """A random sparse polynomial of total degree <= degree."""
    exps = []
    for _ in range(n_terms):
        total = int(rng.integers(0, degree + 1))
        e = np.zeros(n_vars, int)
        for _ in range(total):
            e[int(rng.integers(0, n_vars))] += 1
        exps.append(e)
    exps = np.asarray(exps, int)
    coeffs = scale * rng.uniform(-1.0, 1.0, size=len(exps))
    return Polynomial(coeffs, exps)
