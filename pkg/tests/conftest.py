import numpy as np
import pytest

from noisylattice.model import (InitialState, ModelSpec, ScheduleEntry,
                                boson_hopping_entries, fermion_hopping_entries)

CONFIG_DIR = None


def pytest_configure(config):
    global CONFIG_DIR
    from pathlib import Path
    CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR


@pytest.fixture(scope="session")
def fermion_benchmark_spec():
    """Same model as configs/fermion_chain.toml, built programmatically."""
    ents = tuple(fermion_hopping_entries(1, 1, 2, 1, 0.35)
                 + fermion_hopping_entries(1, 2, 2, 2, 0.25))
    ng = (ScheduleEntry((1, 1, 1, 2), (0.0,), (0.4,)),
          ScheduleEntry((2, 1, 2, 2), (0.0,), (0.3,)))
    return ModelSpec(n=2, L=2, particle_kind="fermion",
                     gaussian_couplings=ents, nongaussian_couplings=ng,
                     kappa1=0.25, kappa2=0.15, kappa3=1.0,
                     initial=InitialState("fock", (1, 1, 0, 0)))


@pytest.fixture(scope="session")
def boson_benchmark_spec():
    """Same model as configs/boson_chain.toml, built programmatically."""
    ents = tuple(boson_hopping_entries(1, 1, 2, 1, 0.12))
    ng = (ScheduleEntry((1, 1, 2, 1), (0.0,), (0.05,)),
          ScheduleEntry((1, 1, 1, 1), (0.0,), (0.2,)),
          ScheduleEntry((2, 1, 2, 1), (0.0,), (0.15,)))
    return ModelSpec(n=2, L=1, particle_kind="boson",
                     gaussian_couplings=ents, nongaussian_couplings=ng,
                     kappa1=0.3, kappa2=0.3, kappa3=0.125,
                     initial=InitialState("coherent", alphas=(0.5 + 0j, 0j)))


def random_fermion_gamma(rng: np.random.Generator, m: int) -> np.ndarray:
    """Random valid covariance matrix: orthogonal rotation of 2x2 blocks."""
    from scipy.stats import ortho_group
    lam = rng.uniform(0.0, 0.5, size=m)
    blocks = np.zeros((2 * m, 2 * m))
    for v, l in enumerate(lam):
        blocks[2 * v, 2 * v + 1] = l
        blocks[2 * v + 1, 2 * v] = -l
    Q = ortho_group.rvs(2 * m, random_state=rng)
    return Q @ blocks @ Q.T
