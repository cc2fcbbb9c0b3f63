import numpy as np
import pytest

from nldisp.kernels import (bump_kernel, eval_kernel, gaussian_kernel,
                            kernel_from_config, kernel_mass, load_tabulated_csv,
                            tabulated_kernel, verify_h1)

BUMP_INTEGRAL = 0.4439938161680793   # integral of exp(-1/(1-x^2)) over [-1,1]


def test_gaussian_density_at_origin(gauss1):
    assert eval_kernel(gauss1, [0.0]) == pytest.approx(0.3989422804014327, abs=1e-12)


def test_bump_vanishes_outside_support():
    k = bump_kernel(r=1.0)
    assert eval_kernel(k, [1.5]) == 0.0
    assert eval_kernel(k, [-1.0]) == 0.0
    assert eval_kernel(k, [0.0]) > 0.0


def test_gaussian_mass_against_fine_quadrature(gauss1):
    # documented grid: [-8, 8], h = 1/64
    axis = -8.0 + (np.arange(1024) + 0.5) * (1.0 / 64)
    mass = kernel_mass(gauss1, axis, 1.0 / 64)
    # independent oracle at h = 1/1024, explicit density formula
    hf = 1.0 / 1024
    xf = -8.0 + (np.arange(16384) + 0.5) * hf
    oracle = float(np.sum(np.exp(-0.5 * xf**2) / np.sqrt(2 * np.pi)) * hf)
    assert abs(mass - oracle) < 1e-10
    assert abs(mass - 1.0) < 1e-10


def test_bump_normalization_constant():
    k = bump_kernel(r=1.0)
    assert k.bump_norm == pytest.approx(1.0 / BUMP_INTEGRAL, rel=1e-6)
    assert abs(kernel_mass(k) - 1.0) < 1e-8


def test_gaussian_tail_bound_scan(gauss1):
    rep = verify_h1(gauss1)
    assert len(rep.tail_violations) == 0
    assert rep.kappa0 == pytest.approx(0.3989422804014327)
    # independent pointwise scan
    radii = np.linspace(4.0, 9.0, 512)
    vals = eval_kernel(gauss1, radii[:, None])
    assert np.all(vals <= np.exp(-radii))


def test_bump_tail_trivially_clean():
    k = bump_kernel(r=1.0, mu=1.0, M=2.0)
    rep = verify_h1(k)
    assert len(rep.tail_violations) == 0


def test_unnormalized_tabulated_mass_two():
    radii = np.linspace(0.0, 1.0, 101)
    values = 2.0 * np.maximum(0.0, 1.0 - radii)   # mass = 2 * triangle area = 2
    k = tabulated_kernel(radii, values, check_mass=False)
    rep = verify_h1(k)
    assert rep.norm_error == pytest.approx(1.0, abs=2e-3)


def test_tabulated_rejects_bad_tables():
    with pytest.raises(ValueError):
        tabulated_kernel([0.5, 1.0], [1.0, 0.0])       # radii must start at 0
    with pytest.raises(ValueError):
        tabulated_kernel([0.0, 1.0], [1.0, -0.1])      # negative values


def test_tabulated_csv_roundtrip(tmp_path):
    path = tmp_path / "kern.csv"
    radii = np.linspace(0.0, 2.0, 201)
    tri = np.maximum(0.0, 1.0 - radii / 2.0)
    vals = tri / 2.0   # integral of f(|x|) over R = 2 * (1/2 * 2 * h) = 2h -> h = 1/2
    path.write_text("# radius,value\n" +
                    "".join(f"{r},{v}\n" for r, v in zip(radii, vals)))
    k = load_tabulated_csv(path, check_mass=False)
    assert eval_kernel(k, [0.0]) == pytest.approx(0.5)
    assert abs(kernel_mass(k) - 1.0) < 1e-3


def test_kernel_nonnegative_and_symmetric(gauss1):
    z = np.linspace(-10, 10, 501)[:, None]
    vals = eval_kernel(gauss1, z)
    assert np.all(vals >= 0)
    assert np.max(np.abs(vals - eval_kernel(gauss1, -z))) == 0.0
    b = bump_kernel(r=1.5)
    vb = eval_kernel(b, z)
    assert np.all(vb >= 0)
    assert np.max(np.abs(vb - eval_kernel(b, -z))) == 0.0


def test_dimension_mismatch_raises(gauss1):
    with pytest.raises(ValueError):
        eval_kernel(gauss1, [0.0, 0.0])


def test_gaussian_2d_mass():
    k = gaussian_kernel(sigma=1.0, dim=2, mu=0.5, M=6.0)
    assert abs(kernel_mass(k) - 1.0) < 1e-8
    assert eval_kernel(k, [0.0, 0.0]) == pytest.approx(1.0 / (2 * np.pi))


def test_kernel_from_config(tmp_path):
    k = kernel_from_config({"kind": "gaussian", "sigma": 1.0, "dim": 1,
                            "mu": 1.0, "M": 4.0})
    assert k.kind == "gaussian" and k.sigma == 1.0
    kb = kernel_from_config({"kind": "bump", "r": 1.0, "dim": 1, "mu": 1.0})
    assert kb.kind == "bump"
    with pytest.raises(ValueError):
        kernel_from_config({"kind": "pareto"})
