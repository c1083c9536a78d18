"""Problem instances: candidate sites, weighted aerial targets, sensor model."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .terrain import DemGrid, elevation_at

FORMAT_NAME = "rishm-instance"
FORMAT_VERSION = 1

MAST_HEIGHT = 0.01
LAYER_ALTITUDES = (3.0, 10.0, 20.0)
WEIGHT_SIGMA = 10.0
WEIGHT_PEAK = 4.0

# scale -> (candidate sites, targets, sensors)
SCALES = {
    "small": (25, 300, 10),
    "medium": (50, 867, 10),
    "large": (100, 1875, 10),
}


@dataclass(frozen=True)
class SensorParams:
    beta_d: float = 1.0
    beta_p: float = 0.15
    beta_t: float = 0.15
    t_d: float = 25.0
    t_p: float = 40.0
    t_t: float = 40.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.t_p > 180 or self.t_t > 90:
            raise ValueError("t_p must be <= 180 and t_t <= 90")


@dataclass(frozen=True, eq=False)
class ScenarioInstance:
    """One coverage problem.

    ``sites`` is ``(|Z|, 3)`` and ``targets`` ``(|Q|, 3)`` in km; ``weights``
    holds one positive weight per target.
    """

    grid: DemGrid
    sites: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    k: int
    params: SensorParams = field(default_factory=SensorParams)
    id: str = ""

    def __post_init__(self):
        sites = np.array(self.sites, dtype=np.float64).reshape(-1, 3)
        targets = np.array(self.targets, dtype=np.float64).reshape(-1, 3)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if len(targets) < 1 or len(weights) != len(targets):
            raise ValueError("need at least one target and one weight per target")
        if not 0 < self.k <= len(sites):
            raise ValueError(f"k={self.k} must satisfy 0 < k <= |Z|={len(sites)}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and non-negative")
        for p in np.vstack([sites, targets]):
            if not self.grid.contains(p[0], p[1]):
                raise ValueError(f"point {tuple(p)} outside grid bounds")
        for a in (sites, targets, weights):
            a.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "k", int(self.k))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def dim(self) -> int:
        return 3 * self.n_sites

    def same_as(self, other: "ScenarioInstance") -> bool:
        return (
            self.grid == other.grid
            and np.array_equal(self.sites, other.sites)
            and np.array_equal(self.targets, other.targets)
            and np.array_equal(self.weights, other.weights)
            and self.k == other.k
            and self.params == other.params
            and self.id == other.id
        )


def total_weight(inst: ScenarioInstance) -> float:
    return float(np.sum(inst.weights))


def layer_lattice(n: int, bounds) -> np.ndarray:
    """``n`` near-uniform (x, y) points: cell centres of a rows x cols partition, row-major."""
    xmin, ymin, xmax, ymax = bounds
    nr = max(1, round(math.sqrt(n)))
    nc = math.ceil(n / nr)
    xs = xmin + (np.arange(nc) + 0.5) * (xmax - xmin) / nc
    ys = ymin + (np.arange(nr) + 0.5) * (ymax - ymin) / nr
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])[:n]


def generate_instance(seed: int, scale: str, grid: DemGrid, params: SensorParams | None = None) -> ScenarioInstance:
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}; expected one of {sorted(SCALES)}")
    n_sites, n_targets, k = SCALES[scale]
    rng = np.random.default_rng([seed, n_sites])
    xmin, ymin, xmax, ymax = grid.bounds

    sx = rng.uniform(xmin, xmax, n_sites)
    sy = rng.uniform(ymin, ymax, n_sites)
    sz = np.array([elevation_at(grid, x, y) for x, y in zip(sx, sy)]) + MAST_HEIGHT
    sites = np.column_stack([sx, sy, sz])

    per_layer = [n_targets // 3 + (1 if i < n_targets % 3 else 0) for i in range(3)]
    if float(grid.elevation.max()) >= min(LAYER_ALTITUDES):
        raise ValueError("terrain reaches the lowest target layer")
    layers = []
    for alt, n in zip(LAYER_ALTITUDES, per_layer):
        xy = layer_lattice(n, grid.bounds)
        layers.append(np.column_stack([xy, np.full(len(xy), alt)]))
    targets = np.vstack(layers)

    center = rng.uniform([xmin, ymin], [xmax, ymax])
    d2 = np.sum((targets[:, :2] - center) ** 2, axis=1)
    weights = 1.0 + WEIGHT_PEAK * np.exp(-d2 / (2 * WEIGHT_SIGMA**2))

    return ScenarioInstance(
        grid=grid,
        sites=sites,
        targets=targets,
        weights=weights,
        k=k,
        params=params or SensorParams(),
        id=f"{scale}-{seed}",
    )


def instance_to_dict(inst: ScenarioInstance) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "id": inst.id,
        "k": inst.k,
        "params": asdict(inst.params),
        "grid": {
            "origin": list(inst.grid.origin),
            "cell_size": inst.grid.cell_size,
            "elevation": inst.grid.elevation.tolist(),
        },
        "sites": inst.sites.tolist(),
        "targets": inst.targets.tolist(),
        "weights": inst.weights.tolist(),
    }


def instance_from_dict(doc: dict) -> ScenarioInstance:
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"not an instance document (format={doc.get('format')!r})")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported instance version {doc.get('version')!r}")
    g = doc["grid"]
    grid = DemGrid(origin=tuple(g["origin"]), cell_size=g["cell_size"], elevation=np.array(g["elevation"]))
    return ScenarioInstance(
        grid=grid,
        sites=np.array(doc["sites"]),
        targets=np.array(doc["targets"]),
        weights=np.array(doc["weights"]),
        k=doc["k"],
        params=SensorParams(**doc["params"]),
        id=doc["id"],
    )


def save_instance(inst: ScenarioInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst)) + "\n")


def load_instance(path) -> ScenarioInstance:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return instance_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed instance document ({exc})") from None
