import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import nldisp
from nldisp import (APField, Mode, assemble, box_grid, constant_profile,
                    gaussian_kernel, torus_grid)
from nldisp.verify import build_scenario

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    nldisp.warmup()


@pytest.fixture(scope="session")
def gauss1():
    return gaussian_kernel(sigma=1.0, dim=1, mu=1.0, M=4.0)


@pytest.fixture(scope="session")
def torus16(gauss1):
    """Standard torus operator: L=16, n=256, Gaussian sigma=1."""
    return assemble(gauss1, torus_grid(16.0, 256))


@pytest.fixture(scope="session")
def torus16_small(gauss1):
    """Cheap variant for unit tests: L=16, n=64."""
    return assemble(gauss1, torus_grid(16.0, 64))


@pytest.fixture(scope="session")
def toy2(gauss1):
    """Two-node operator with nodes {0, 1} and unit weights."""
    return assemble(gauss1, box_grid(-0.5, 1.5, 2))


def load_config(name):
    with open(CONFIG_DIR / name) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def shipped():
    """The scenario configs shipped in configs/, built."""
    names = ["constant_baseline.json", "quasi_periodic.json", "random_space.json",
             "spacetime_cos.json"]
    return {n.split(".")[0]: build_scenario(load_config(n)) for n in names}


def quasi_field():
    cp = constant_profile
    return APField(c0=cp(0.0), modes=(
        Mode(profile=cp(1.0), omega=1.0, theta=-math.pi / 2),
        Mode(profile=cp(1.0), omega=SQRT2, theta=-math.pi / 2)))


def _timed(fn, *args, **kw):
    start = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - start


@pytest.fixture(scope="session")
def quasi_lyap(shipped):
    """The horizon-2000 Lyapunov run of the quasi-periodic scenario (shared)."""
    scn = shipped["quasi_periodic"]
    res, secs = _timed(nldisp.lyapunov_top, scn.K, scn.a, horizon=2000.0)
    return {"result": res, "seconds": secs}


@pytest.fixture(scope="session")
def quasi_pep(shipped, quasi_lyap):
    scn = shipped["quasi_periodic"]
    res, secs = _timed(nldisp.estimate_lambda_PE_prime, scn.K, scn.a,
                       lambda_PL_est=quasi_lyap["result"].lambda_PL)
    return {"result": res, "seconds": secs}


@pytest.fixture(scope="session")
def quasi_pe(shipped):
    scn = shipped["quasi_periodic"]
    res, secs = _timed(nldisp.estimate_lambda_PE, scn.K, scn.a,
                       denominators=(5, 29, 99))
    return {"result": res, "seconds": secs}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
