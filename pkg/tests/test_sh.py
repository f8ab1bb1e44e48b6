import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import real_sh_scipy, sh_degree2_hardcoded
from splatlab.sh import SH_C0, degree_of_index, eval_basis, eval_basis_grad, num_coeffs


def random_dirs(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


class TestBasis:
    def test_num_coeffs(self):
        assert [num_coeffs(d) for d in range(6)] == [1, 4, 9, 16, 25, 36]

    def test_degree_of_index(self):
        assert [degree_of_index(i) for i in range(10)] == [0, 1, 1, 1, 2, 2, 2, 2, 2, 3]

    def test_constant_band(self, rng):
        Y = eval_basis(random_dirs(rng, 5), 0)
        np.testing.assert_allclose(Y, SH_C0, rtol=0, atol=1e-15)
        np.testing.assert_allclose(SH_C0, 0.5 / np.sqrt(np.pi), rtol=1e-15)

    def test_band_one_signs(self):
        C1 = np.sqrt(3.0 / (4.0 * np.pi))
        d = np.array([[0.36, 0.48, 0.8]])
        np.testing.assert_allclose(eval_basis(d, 1)[0, 1:], C1 * np.array([-0.48, 0.8, -0.36]),
                                   atol=1e-14)

    def test_band_two_matches_renderer_constants(self, rng):
        d = random_dirs(rng, 50)
        np.testing.assert_allclose(eval_basis(d, 2)[:, 4:9], sh_degree2_hardcoded(d), atol=1e-13)

    @pytest.mark.parametrize("degree", [1, 3, 5])
    def test_matches_scipy(self, rng, degree):
        d = random_dirs(rng, 200)
        np.testing.assert_allclose(eval_basis(d, degree), real_sh_scipy(d, degree), atol=1e-12)

    def test_orthonormal_by_quadrature(self):
        # Gauss-Legendre in cos(theta) and uniform phi integrate degree <= 10 exactly
        L = 5
        u, wu = np.polynomial.legendre.leggauss(12)
        phi = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        U, P = np.meshgrid(u, phi, indexing="ij")
        s = np.sqrt(1 - U**2)
        dirs = np.stack([s * np.cos(P), s * np.sin(P), U], -1).reshape(-1, 3)
        w = (wu[:, None] * np.full_like(P, 2 * np.pi / len(phi))).reshape(-1)
        Y = eval_basis(dirs, L)
        gram = (Y * w[:, None]).T @ Y
        np.testing.assert_allclose(gram, np.eye(num_coeffs(L)), atol=1e-12)


class TestBasisGradient:
    @pytest.mark.parametrize("degree", [1, 2, 4])
    def test_matches_finite_difference(self, rng, degree):
        d = rng.normal(size=(6, 3))
        G = eval_basis_grad(d, degree)
        h = 1e-6
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (eval_basis(d + e, degree) - eval_basis(d - e, degree)) / (2 * h)
            np.testing.assert_allclose(G[..., k], fd, atol=1e-7)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_parity(x, y, z):
    v = np.array([x, y, z])
    n = np.linalg.norm(v)
    if n < 1e-3:
        return
    v = v / n
    Yp, Ym = eval_basis(v, 3), eval_basis(-v, 3)
    sign = np.array([(-1) ** degree_of_index(i) for i in range(16)])
    np.testing.assert_allclose(Ym, sign * Yp, atol=1e-12)
