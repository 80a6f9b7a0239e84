import numpy as np
import pytest

from menucost.model import ModelParams


def random_valid_params(rng, with_band=True):
    """A random economy inside the admissible region."""
    beta = rng.uniform(0.2, 3.0)
    c = rng.uniform(0.1, 2.0)
    b = rng.uniform(0.0, 2.0)
    alpha = beta * b + rng.uniform(1.0, 20.0)
    a = rng.uniform(0.0, 3.0)
    gamma = rng.uniform(0.1, 5.0) if with_band else 0.0
    sigma = rng.uniform(0.05, 2.0) if with_band else 0.0
    return ModelParams(alpha=alpha, beta=beta, a=a, b=b, c=c, gamma=gamma, sigma=sigma)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)


@pytest.fixture(scope="session")
def mid_panel(tmp_path_factory):
    """A moderately sized generated panel, analyzed once and shared."""
    from menucost.analyze import run_analysis
    from menucost.synth import SynthConfig, write_panel

    td = tmp_path_factory.mktemp("mid_panel")
    cfg = SynthConfig(n_stores=40, n_products=120, n_weeks=250, seed=77)
    info = write_panel(cfg, td / "data")
    adir = td / "analysis"
    run_analysis(
        info["movement"],
        adir,
        meta_path=info["meta"],
        stores_path=info["stores"],
        calendar_path=info["calendar"],
    )
    return {"info": info, "adir": adir, "cfg": cfg}
