import numpy as np
import pytest

from fovsplat.sh import C0, eval_sh_color, rgb_to_dc, sh_basis, sh_basis_grad


def unit_dirs(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def test_dc_only_color_recovers_rgb():
    rgb = np.array([[0.2, 0.5, 0.8]])
    coeffs = rgb_to_dc(rgb).reshape(1, 1, 3)
    dirs = np.array([[0.0, 0.0, 1.0]])
    assert np.allclose(eval_sh_color(coeffs, dirs), rgb)


def test_degree0_color_is_view_independent(rng):
    coeffs = rng.normal(0, 0.3, (4, 1, 3))
    d1 = unit_dirs(rng, 4)
    d2 = unit_dirs(rng, 4)
    assert np.allclose(eval_sh_color(coeffs, d1), eval_sh_color(coeffs, d2))


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_basis_gradients_match_finite_differences(degree, rng):
    dirs = unit_dirs(rng, 6)
    g = sh_basis_grad(dirs, degree)
    h = 1e-6
    for axis in range(3):
        d_plus = dirs.copy()
        d_plus[:, axis] += h
        d_minus = dirs.copy()
        d_minus[:, axis] -= h
        fd = (sh_basis(d_plus, degree) - sh_basis(d_minus, degree)) / (2 * h)
        assert np.allclose(g[:, :, axis], fd, atol=1e-6)


def test_basis_orthogonality_on_sphere():
    # numerically integrate b_i b_j over the sphere: orthogonal basis
    rng = np.random.default_rng(0)
    n = 200_000
    dirs = unit_dirs(rng, n)
    b = sh_basis(dirs, 2)
    gram = (b.T @ b) / n * (4 * np.pi)
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() < 0.05
    assert np.allclose(np.diag(gram), 1.0, atol=0.05)


def test_dc_constant_is_standard():
    assert C0 == pytest.approx(0.5 / np.sqrt(np.pi))
