"""Probabilistic directional coverage objective with terrain visibility.

The objective is the weighted blind-spot mass
``sum_q w_q * prod_i (1 - P(s_i, q))`` over the selected sensors, to be
minimised.  Site/target geometry (distances, bearings, visibility) depends
only on the instance, so it is computed once per instance and reused;
angle-dependent terms are recomputed on every call.
"""
from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .genome import PAN_RANGE, TILT_RANGE, Solution, check_valid
from .scenario import ScenarioInstance, SensorParams, total_weight
from .terrain import DemGrid, Point3, line_of_sight


class BudgetExhausted(RuntimeError):
    pass


class EvalCounter:
    """Fitness-evaluation budget. ``charge`` is atomic."""

    def __init__(self, budget: int):
        if budget < 0:
            raise ValueError("budget must be non-negative")
        self.budget = int(budget)
        self.used = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def charge(self) -> int:
        with self._lock:
            if self.used >= self.budget:
                raise BudgetExhausted(f"evaluation budget of {self.budget} exhausted")
            self.used += 1
            return self.used

    def __repr__(self):
        return f"EvalCounter(used={self.used}, budget={self.budget})"


@dataclass(frozen=True)
class ObjectiveValue:
    fitness: float
    coverage_fraction: float
    residual_fraction: float


def mu_distance(d, p: SensorParams):
    return expit(-p.beta_d * (np.asarray(d, dtype=np.float64) - p.t_d))


def _band(alpha, beta, t):
    alpha = np.asarray(alpha, dtype=np.float64)
    return expit(beta * (alpha + t)) - expit(beta * (alpha - t))


def mu_pan(alpha_p, p: SensorParams):
    return _band(alpha_p, p.beta_p, p.t_p)


def mu_tilt(alpha_t, p: SensorParams):
    return _band(alpha_t, p.beta_t, p.t_t)


def _deviations(dx, dy, dz, pan_deg, tilt_deg):
    """Horizontal and vertical deviation (degrees) of the target from the sensor axis."""
    dh = np.hypot(dx, dy)
    flat = dh == 0
    safe = np.where(flat, 1.0, dh)
    th = np.radians(pan_deg)
    cosarg = np.clip((np.cos(th) * dx + np.sin(th) * dy) / safe, -1.0, 1.0)
    alpha_p = np.where(flat, 0.0, np.degrees(np.arccos(cosarg)))
    elev = np.where(flat, np.sign(dz) * 90.0, np.degrees(np.arctan(dz / safe)))
    return alpha_p, elev - tilt_deg


def _check_angles(pan, tilt):
    if not (PAN_RANGE[0] <= pan <= PAN_RANGE[1]) or not (TILT_RANGE[0] <= tilt <= TILT_RANGE[1]):
        raise ValueError(f"pan {pan} / tilt {tilt} outside [-180,180] / [-90,90]")


def sense_probability(sensor: Point3, pan: float, tilt: float, target: Point3,
                      grid: DemGrid, p: SensorParams) -> float:
    """Probability that one sensor detects one target."""
    _check_angles(pan, tilt)
    if not line_of_sight(grid, sensor, target):
        return 0.0
    dx, dy, dz = target.x - sensor.x, target.y - sensor.y, target.z - sensor.z
    alpha_p, alpha_t = _deviations(dx, dy, dz, pan, tilt)
    d = np.sqrt(dx * dx + dy * dy + dz * dz)
    return float(mu_distance(d, p) * mu_pan(alpha_p, p) * mu_tilt(alpha_t, p))


class Geometry:
    """Angle-independent site x target quantities for one instance."""

    def __init__(self, inst: ScenarioInstance):
        delta = inst.targets[None, :, :] - inst.sites[:, None, :]
        self.dx = delta[..., 0]
        self.dy = delta[..., 1]
        self.dz = delta[..., 2]
        self.mu_d = mu_distance(np.linalg.norm(delta, axis=2), inst.params)
        self.visible = np.array([
            [line_of_sight(inst.grid, Point3(*s), Point3(*q)) for q in inst.targets]
            for s in inst.sites
        ], dtype=np.int8)


_geometry_cache: "weakref.WeakKeyDictionary[ScenarioInstance, Geometry]" = weakref.WeakKeyDictionary()
_geometry_lock = threading.Lock()


def geometry(inst: ScenarioInstance) -> Geometry:
    with _geometry_lock:
        geo = _geometry_cache.get(inst)
        if geo is None:
            geo = Geometry(inst)
            _geometry_cache[inst] = geo
        return geo


def sensor_probabilities(inst: ScenarioInstance, idx, pan, tilt) -> np.ndarray:
    """``(len(idx), |Q|)`` detection probabilities for sensors at sites ``idx``."""
    geo = geometry(inst)
    idx = np.asarray(idx)
    pan = np.asarray(pan, dtype=np.float64)[:, None]
    tilt = np.asarray(tilt, dtype=np.float64)[:, None]
    alpha_p, alpha_t = _deviations(geo.dx[idx], geo.dy[idx], geo.dz[idx], pan, tilt)
    p = inst.params
    return geo.mu_d[idx] * mu_pan(alpha_p, p) * mu_tilt(alpha_t, p) * geo.visible[idx]


def blind_spot_mass(sol: Solution, inst: ScenarioInstance) -> float:
    """Weighted residual mass for whatever sites ``sol`` selects (no cardinality check)."""
    idx = np.flatnonzero(sol.select)
    if len(idx) == 0:
        return total_weight(inst)
    probs = sensor_probabilities(inst, idx, sol.pan[idx], sol.tilt[idx])
    miss = np.prod(1.0 - probs, axis=0)
    return float(np.dot(inst.weights, miss))


def objective_value(fitness: float, inst: ScenarioInstance) -> ObjectiveValue:
    tw = total_weight(inst)
    return ObjectiveValue(fitness=fitness, coverage_fraction=1.0 - fitness / tw, residual_fraction=fitness / tw)


def evaluate(sol: Solution, inst: ScenarioInstance, counter: EvalCounter | None = None) -> ObjectiveValue:
    """True objective. Charges one evaluation to ``counter`` when given."""
    if sol.n_sites != inst.n_sites:
        raise ValueError(f"solution has {sol.n_sites} sites, instance has {inst.n_sites}")
    check_valid(sol, inst.k)
    if counter is not None:
        counter.charge()
    return objective_value(blind_spot_mass(sol, inst), inst)
