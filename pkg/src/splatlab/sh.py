"""Real spherical-harmonics basis as Cartesian polynomials.

Each basis function Y_lm is stored as a coefficient tensor over monomials
x^a y^b z^c, which makes both evaluation and the direction gradient a single
contraction.  Ordering follows the usual splatting layout: flat index
``l*l + l + m`` for ``m = -l..l``, Condon-Shortley phase included, so that
``Y_1,-1 = -C1*y``, ``Y_1,0 = C1*z``, ``Y_1,1 = -C1*x``.
"""

from functools import lru_cache
from math import comb, factorial, pi, sqrt

import numpy as np
from numpy.polynomial import Legendre, Polynomial

#: Y_00, the constant band.
SH_C0 = 0.28209479177387814


def num_coeffs(degree):
    """Number of coefficients for a bank of the given degree, (D+1)**2."""
    return (degree + 1) ** 2


def degree_of_index(index):
    """Band ``l`` that flat coefficient ``index`` belongs to."""
    return int(np.floor(np.sqrt(index)))


def _xy_power(m, imaginary):
    """Coefficients of Re/Im (x + i y)^m as a dict {(a, b): c}."""
    terms = {}
    for k in range(m + 1):
        # (i y)^k contributes i^k
        if imaginary != (k % 2 == 1):
            continue
        sign = (-1) ** (k // 2)
        terms[(m - k, k)] = sign * comb(m, k)
    return terms


@lru_cache(maxsize=None)
def basis_tensor(max_degree):
    """Monomial coefficient tensor, shape ``(nu, L+1, L+1, L+1)``."""
    L = max_degree
    out = np.zeros((num_coeffs(L), L + 1, L + 1, L + 1))
    for l in range(L + 1):
        legendre = Legendre.basis(l).convert(kind=Polynomial)
        for m in range(-l, l + 1):
            am = abs(m)
            norm = sqrt((2 * l + 1) / (4 * pi) * factorial(l - am) / factorial(l + am))
            if m != 0:
                norm *= sqrt(2.0)
            norm *= (-1) ** am
            zpoly = legendre.deriv(am).coef if am <= l else np.zeros(1)
            xy = _xy_power(am, imaginary=m < 0)
            idx = l * l + l + m
            for c, zc in enumerate(zpoly):
                if zc == 0.0:
                    continue
                for (a, b), t in xy.items():
                    out[idx, a, b, c] += norm * zc * t
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _gradient_tensors(max_degree):
    C = basis_tensor(max_degree)
    grads = []
    for axis in range(3):
        G = np.zeros_like(C)
        src = [slice(None)] * 4
        dst = [slice(None)] * 4
        src[axis + 1] = slice(1, None)
        dst[axis + 1] = slice(None, -1)
        powers = np.arange(1, C.shape[axis + 1]).reshape(
            [-1 if i == axis else 1 for i in range(3)]
        )
        G[tuple(dst)] = C[tuple(src)] * powers
        grads.append(G)
    out = np.stack(grads)
    out.setflags(write=False)
    return out


def _monomials(dirs, L):
    dirs = np.asarray(dirs, dtype=np.float64)
    p = np.arange(L + 1)
    px = dirs[..., 0, None] ** p
    py = dirs[..., 1, None] ** p
    pz = dirs[..., 2, None] ** p
    return px, py, pz


def eval_basis(dirs, max_degree):
    """All basis values up to ``max_degree`` at ``dirs``, shape ``(..., nu)``.

    ``dirs`` is expected to be unit length; off the sphere the polynomials
    are simply evaluated as written.
    """
    px, py, pz = _monomials(dirs, max_degree)
    return np.einsum("...a,...b,...c,nabc->...n", px, py, pz, basis_tensor(max_degree))


def eval_basis_grad(dirs, max_degree):
    """Cartesian gradient of every basis polynomial, shape ``(..., nu, 3)``."""
    px, py, pz = _monomials(dirs, max_degree)
    G = _gradient_tensors(max_degree)
    return np.einsum("...a,...b,...c,knabc->...nk", px, py, pz, G)
