import sys
from pathlib import Path

import numpy as np
import pytest

from mtcbi import JumpMeasure, ModelParams, build_mean_params, load_model, perron_and_classify

sys.path.insert(0, str(Path(__file__).resolve().parent))

MODELS = Path(__file__).resolve().parent.parent / "models"


def make_params(d, c, beta, B, x0, nu_atoms=(), mu_atoms=None):
    """Inline model constructor for tests; atoms are (rate, vector) pairs."""
    mu_atoms = mu_atoms or [() for _ in range(d)]
    return ModelParams(
        d=d,
        c=np.asarray(c, dtype=float),
        beta=np.asarray(beta, dtype=float),
        B=np.asarray(B, dtype=float),
        nu=JumpMeasure.from_atoms(d, list(nu_atoms)),
        mu=tuple(JumpMeasure.from_atoms(d, list(a)) for a in mu_atoms),
        x0=np.asarray(x0, dtype=float),
    )


def spectral_of(params):
    return perron_and_classify(*build_mean_params(params))


@pytest.fixture(scope="session")
def r1():
    return load_model(str(MODELS / "R1.json"))


@pytest.fixture(scope="session")
def r2():
    return load_model(str(MODELS / "R2.json"))


@pytest.fixture(scope="session")
def r3():
    return load_model(str(MODELS / "R3.json"))


@pytest.fixture(scope="session")
def spec_r1(r1):
    return spectral_of(r1)


@pytest.fixture(scope="session")
def spec_r2(r2):
    return spectral_of(r2)


@pytest.fixture(scope="session")
def spec_r3(r3):
    return spectral_of(r3)


@pytest.fixture(scope="session")
def model_paths():
    return {name: str(MODELS / f"{name}.json") for name in ("R1", "R2", "R3")}
