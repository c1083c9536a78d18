import numpy as np
import pytest

from rishm.scenario import ScenarioInstance, SensorParams, generate_instance
from rishm.terrain import DemGrid, generate_terrain


@pytest.fixture(scope="session")
def terrain():
    return generate_terrain(seed=1)


@pytest.fixture(scope="session")
def small_instance(terrain):
    return generate_instance(seed=1, scale="small", grid=terrain)


def toy_instance(seed: int, n_sites: int = 4, n_targets: int = 5, k: int = 2) -> ScenarioInstance:
    """Tiny random instance over rough terrain, for oracle comparisons."""
    rng = np.random.default_rng(seed)
    grid = generate_terrain(seed, rows=33, cols=33, cell_size=30 / 32, max_height=1.5)
    from rishm.terrain import elevation_at

    sx, sy = rng.uniform(0, 30, n_sites), rng.uniform(0, 30, n_sites)
    sites = [(x, y, elevation_at(grid, x, y) + 0.01) for x, y in zip(sx, sy)]
    tx, ty = rng.uniform(0, 30, n_targets), rng.uniform(0, 30, n_targets)
    tz = rng.choice([0.5, 3.0, 10.0], n_targets)
    tz = np.maximum(tz, [elevation_at(grid, x, y) + 0.05 for x, y in zip(tx, ty)])
    return ScenarioInstance(
        grid=grid,
        sites=np.array(sites),
        targets=np.column_stack([tx, ty, tz]),
        weights=rng.uniform(1, 5, n_targets),
        k=k,
        params=SensorParams(t_d=rng.uniform(10, 30)),
        id=f"toy-{seed}",
    )


def flat_instance(sites, targets, weights, k, z=0.0, n=51) -> ScenarioInstance:
    grid = DemGrid((0.0, 0.0), 1.0, np.full((n, n), z))
    return ScenarioInstance(grid=grid, sites=np.array(sites, dtype=float), targets=np.array(targets, dtype=float),
                            weights=np.array(weights, dtype=float), k=k, id="flat")


# acceptance lines collected by test_acceptance and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
