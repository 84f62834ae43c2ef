"""Bounds on the self-powered failure probability over uncertain inputs,
and deterministic controller-gain region maps.

The measure family is finite-support product measures: every input gets
``support_points`` atoms with weights on the simplex. Optimal bounds are
searched by multi-start coordinate search. For one input at a time, both
the failure probability and the mean response are linear in that input's
weights, so the weight update is an exact small LP. Atom locations are
improved by a grid, random draws and shrinking local moves.

The reported bounds are values achieved by an exhibited witness measure.
They are therefore inner estimates of the true supremum and infimum.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .control import ConfigurationError, ControlScenario, PidGains, run_batch

MEAN_TOL = 1e-9


class InfeasibleError(RuntimeError):
    """No measure in the family satisfies the mean constraint."""


class ResponseError(RuntimeError):
    def __init__(self, point, cause):
        self.point = point
        super().__init__(f"response failed at {point}: {cause}")


@dataclass(frozen=True)
class BoundedInput:
    name: str
    lower: float
    upper: float
    support_points: int = 2

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or self.lower > self.upper:
            raise ValueError(f"input {self.name!r}: need finite lower <= upper")
        if self.support_points < 1:
            raise ValueError(f"input {self.name!r}: support_points must be >= 1")


@dataclass(frozen=True)
class ProductMeasure:
    """Per input, a pair ``(locations, weights)``."""

    atoms: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]

    def __post_init__(self):
        for locs, weights in self.atoms:
            if len(locs) != len(weights) or not locs:
                raise ValueError("each input needs matching, non-empty locations and weights")
            if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-12:
                raise ValueError(f"weights {weights} are not a probability vector")

    @classmethod
    def from_arrays(cls, locations: Sequence[Sequence[float]], weights: Sequence[Sequence[float]]):
        atoms = []
        for loc, w in zip(locations, weights):
            w = np.clip(np.asarray(w, float), 0.0, None)
            w = w / w.sum()
            atoms.append((tuple(float(x) for x in loc), tuple(float(x) for x in w)))
        return cls(tuple(atoms))

    def check(self, inputs: Sequence[BoundedInput]) -> None:
        if len(inputs) != len(self.atoms):
            raise ValueError("measure and admissible set differ in dimension")
        for inp, (locs, _) in zip(inputs, self.atoms):
            if min(locs) < inp.lower or max(locs) > inp.upper:
                raise ValueError(f"atoms of {inp.name!r} leave [{inp.lower}, {inp.upper}]")

    def describe(self, inputs: Sequence[BoundedInput]) -> list[str]:
        lines = []
        for inp, (locs, weights) in zip(inputs, self.atoms):
            for x, w in zip(locs, weights):
                lines.append(f"{inp.name} atom={x:.17g} weight={w:.17g}")
        return lines


@dataclass
class AdmissibleSet:
    """``response`` maps an input tuple to ``P_non``; failure is ``P_non > threshold``.

    ``mean_constraint=None`` drops the moment constraint.
    """

    inputs: Sequence[BoundedInput]
    response: Callable[[tuple[float, ...]], float]
    mean_constraint: float | None = 1.0
    threshold: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("admissible set needs at least one input")
        names = [i.name for i in self.inputs]
        if len(set(names)) != len(names):
            raise ValueError("input names must be unique")

    def evaluate(self, point: tuple[float, ...]) -> float:
        key = tuple(float(p) for p in point)
        try:
            return self._cache[key]
        except KeyError:
            pass
        try:
            value = float(self.response(key))
        except Exception as exc:
            raise ResponseError(dict(zip((i.name for i in self.inputs), key)), exc) from exc
        if not math.isfinite(value):
            raise ResponseError(dict(zip((i.name for i in self.inputs), key)), "non-finite response")
        self._cache[key] = value
        return value

    @property
    def evaluations(self) -> int:
        return len(self._cache)


@dataclass(frozen=True)
class FailureEstimate:
    probability: float
    mean: float
    mean_satisfied: bool


@dataclass(frozen=True)
class BoundResult:
    value: float
    witness: ProductMeasure
    mean: float
    evaluations: int
    starts: int
    sense: str

    def report(self, inputs: Sequence[BoundedInput]) -> list[str]:
        label = "U" if self.sense == "upper" else "L"
        lines = [f"{label}={self.value:.17g}", f"{label}_witness_mean={self.mean:.17g}"]
        lines += [f"{label}_witness {s}" for s in self.witness.describe(inputs)]
        return lines


def failure_probability(measure: ProductMeasure, admissible: AdmissibleSet) -> FailureEstimate:
    """Exact ``mu[P_non > threshold]`` and ``E_mu[P_non]`` by enumerating atom combinations."""
    measure.check(admissible.inputs)
    prob = 0.0
    mean = 0.0
    for combo in itertools.product(*(zip(locs, w) for locs, w in measure.atoms)):
        weight = math.prod(c[1] for c in combo)
        value = admissible.evaluate(tuple(c[0] for c in combo))
        mean += weight * value
        if value > admissible.threshold:
            prob += weight
    prob = min(max(prob, 0.0), 1.0)
    ok = admissible.mean_constraint is None or mean <= admissible.mean_constraint + MEAN_TOL
    return FailureEstimate(prob, mean, ok)


# ---------------------------------------------------------------------------
# search


class _Search:
    def __init__(self, admissible: AdmissibleSet, sign: float, rng: np.random.Generator, grid: int,
                 random_candidates: int, refinements: int):
        self.adm = admissible
        self.sign = sign  # +1 maximise, -1 minimise
        self.rng = rng
        self.grid = grid
        self.random_candidates = random_candidates
        self.refinements = refinements
        self.cap = admissible.mean_constraint

    def conditional(self, locs, weights, j, x):
        """Failure probability and mean given input ``j`` sits at ``x``."""
        others = [k for k in range(len(locs)) if k != j]
        f = m = 0.0
        for combo in itertools.product(*(range(len(locs[k])) for k in others)):
            w = 1.0
            point = [0.0] * len(locs)
            point[j] = x
            for k, a in zip(others, combo):
                w *= weights[k][a]
                point[k] = locs[k][a]
            if w == 0.0:
                continue
            v = self.adm.evaluate(tuple(point))
            m += w * v
            if v > self.adm.threshold:
                f += w
        return f, m

    def merit(self, prob, mean):
        violation = 0.0 if self.cap is None else max(0.0, mean - self.cap - MEAN_TOL)
        # ties go to the smaller mean: slack lets the next weight solve move further
        return (-violation, self.sign * prob, -mean)

    def solve_weights(self, f, m):
        k = len(f)
        if k == 1:
            return np.ones(1)
        a_ub = b_ub = None
        if self.cap is not None:
            if min(m) > self.cap:
                w = np.zeros(k)
                w[int(np.argmin(m))] = 1.0
                return w
            a_ub, b_ub = [m], [self.cap]
        res = linprog(-self.sign * np.asarray(f), A_ub=a_ub, b_ub=b_ub, A_eq=[np.ones(k)], b_eq=[1.0],
                      bounds=[(0.0, 1.0)] * k, method="highs")
        if not res.success:
            w = np.zeros(k)
            w[int(np.argmin(m))] = 1.0
            return w
        w = np.clip(res.x, 0.0, None)
        return w / w.sum()

    def candidates(self, inp: BoundedInput, current: float):
        lo, hi = inp.lower, inp.upper
        if lo == hi:
            return [lo]
        cand = list(np.linspace(lo, hi, self.grid))
        cand += list(self.rng.uniform(lo, hi, self.random_candidates))
        h = (hi - lo) / max(self.grid - 1, 1)
        for k in range(self.refinements):
            step = h * 0.5**k
            cand += [current - step, current + step]
        return [float(min(max(c, lo), hi)) for c in cand]

    def run(self, locs, weights, sweeps: int):
        inputs = self.adm.inputs
        for _ in range(sweeps):
            changed = False
            for j, inp in enumerate(inputs):
                # weights, exact for this input
                fm = [self.conditional(locs, weights, j, x) for x in locs[j]]
                f = [p for p, _ in fm]
                m = [q for _, q in fm]
                w_new = self.solve_weights(f, m)
                if self.merit(float(np.dot(w_new, f)), float(np.dot(w_new, m))) > \
                        self.merit(float(np.dot(weights[j], f)), float(np.dot(weights[j], m))):
                    weights[j] = w_new
                    changed = True
                # locations, one atom at a time
                for a in range(len(locs[j])):
                    f_rest = sum(weights[j][b] * f[b] for b in range(len(f)) if b != a)
                    m_rest = sum(weights[j][b] * m[b] for b in range(len(m)) if b != a)
                    wa = weights[j][a]
                    cur = self.merit(f_rest + wa * f[a], m_rest + wa * m[a])
                    for x in self.candidates(inp, locs[j][a]):
                        fx, mx = self.conditional(locs, weights, j, x)
                        score = self.merit(f_rest + wa * fx, m_rest + wa * mx)
                        if score > cur:
                            cur = score
                            locs[j][a], f[a], m[a] = x, fx, mx
                            changed = True
            if not changed:
                break
        measure = ProductMeasure.from_arrays(locs, weights)
        est = failure_probability(measure, self.adm)
        return measure, est


def _bound(admissible: AdmissibleSet, sense: str, starts: int, sweeps: int, seed: int, grid: int,
           random_candidates: int, refinements: int) -> BoundResult:
    if starts < 1 or sweeps < 1:
        raise ValueError("search budget must be positive")
    sign = 1.0 if sense == "upper" else -1.0
    rng = np.random.default_rng(seed)
    search = _Search(admissible, sign, rng, grid, random_candidates, refinements)
    best = None
    for _ in range(starts):
        locs = [list(rng.uniform(i.lower, i.upper, i.support_points)) for i in admissible.inputs]
        weights = [np.full(i.support_points, 1.0 / i.support_points) for i in admissible.inputs]
        measure, est = search.run(locs, weights, sweeps)
        if not est.mean_satisfied:
            continue
        if best is None or sign * est.probability > sign * best[1].probability:
            best = (measure, est)
    if best is None:
        raise InfeasibleError(
            f"no measure found with E[P_non] <= {admissible.mean_constraint} after {starts} starts"
        )
    measure, est = best
    return BoundResult(est.probability, measure, est.mean, admissible.evaluations, starts, sense)


def ouq_upper_bound(admissible: AdmissibleSet, starts: int = 32, sweeps: int = 20, seed: int = 0,
                    grid: int = 33, random_candidates: int = 8, refinements: int = 40) -> BoundResult:
    """Largest failure probability found over feasible product measures."""
    return _bound(admissible, "upper", starts, sweeps, seed, grid, random_candidates, refinements)


def ouq_lower_bound(admissible: AdmissibleSet, starts: int = 32, sweeps: int = 20, seed: int = 0,
                    grid: int = 33, random_candidates: int = 8, refinements: int = 40) -> BoundResult:
    """Smallest failure probability found over feasible product measures."""
    return _bound(admissible, "lower", starts, sweeps, seed, grid, random_candidates, refinements)


# ---------------------------------------------------------------------------
# gain maps

MAP_COLUMNS = ("kp", "kd", "pnon_max", "overshoot", "vmax", "peak_time", "diverged")


@dataclass
class GainMap:
    kp: np.ndarray
    kd: np.ndarray
    pnon_max: np.ndarray
    overshoot: np.ndarray
    vmax: np.ndarray
    peak_time: np.ndarray
    diverged: np.ndarray

    def rows(self) -> np.ndarray:
        kp, kd = np.meshgrid(self.kp, self.kd, indexing="ij")
        return np.column_stack([
            kp.ravel(), kd.ravel(), self.pnon_max.ravel(), self.overshoot.ravel(),
            self.vmax.ravel(), self.peak_time.ravel(), self.diverged.ravel().astype(float),
        ])

    def to_csv(self, path, mask: np.ndarray | None = None) -> None:
        rows = self.rows()
        header = list(MAP_COLUMNS)
        fmt = ["%.17g"] * 6 + ["%d"]
        if mask is not None:
            rows = np.column_stack([rows, mask.ravel().astype(float)])
            header.append("feasible")
            fmt.append("%d")
        np.savetxt(path, rows, fmt=fmt, delimiter=",", header=",".join(header), comments="")


def gain_region_map(template: ControlScenario, kp_range: BoundedInput, kd_range: BoundedInput,
                    resolution: tuple[int, int] = (41, 41), channel: str = "x") -> GainMap:
    """Sweep the force-loop ``kp`` and ``kd`` over a grid.

    ``ki`` and the pitch loop come from the template. Per cell, records max
    ``P_non``, overshoot of ``channel``, peak speed and peak time. Diverged
    cells are kept with NaN metrics.
    """
    nkp, nkd = resolution
    if nkp < 2 or nkd < 2:
        raise ConfigurationError("gain-map resolution must be at least 2 per axis")
    ref = getattr(template, f"{channel}_reference")
    if not ref.is_step or ref.amplitude <= 0:
        raise ConfigurationError(f"gain-map template needs a positive step on {channel}")
    if min(kp_range.lower, kd_range.lower) < 0:
        raise ConfigurationError("gains must be non-negative")
    kp = np.linspace(kp_range.lower, kp_range.upper, nkp)
    kd = np.linspace(kd_range.lower, kd_range.upper, nkd)
    if np.any(np.diff(kp) <= 0) or np.any(np.diff(kd) <= 0):
        raise ConfigurationError("gain ranges must have positive width")
    KP, KD = np.meshgrid(kp, kd, indexing="ij")
    g = template.gains_force
    gains = np.column_stack([
        KP.ravel(), np.full(KP.size, g.ki), KD.ravel(), np.full(KP.size, g.derivative_filter or 0.0),
    ])
    agg, _ = run_batch(template, gains, channel=channel)
    diverged = agg[:, 5] >= 0
    final = agg[:, 4]
    ok = ~diverged & (final > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        overshoot = np.where(ok, np.maximum(0.0, agg[:, 2] / final - 1.0), np.nan)
    peak_time = np.where(ok, agg[:, 3] * template.dt, np.nan)
    pnon = np.where(diverged, np.nan, agg[:, 0])
    vmax = np.where(diverged, np.nan, agg[:, 1])
    shape = (nkp, nkd)
    return GainMap(kp, kd, pnon.reshape(shape), overshoot.reshape(shape), vmax.reshape(shape),
                   peak_time.reshape(shape), diverged.reshape(shape))


@dataclass(frozen=True)
class FeasibleRegion:
    mask: np.ndarray
    count: int
    kp_extent: tuple[float, float] | None
    kd_extent: tuple[float, float] | None

    def summary(self) -> list[str]:
        lines = [f"feasible_cells={self.count}"]
        if self.count:
            lines.append(f"kp_extent={self.kp_extent[0]:.17g},{self.kp_extent[1]:.17g}")
            lines.append(f"kd_extent={self.kd_extent[0]:.17g},{self.kd_extent[1]:.17g}")
        return lines


def feasible_region(gmap: GainMap, pnon_max: float | None = None, overshoot_max: float | None = None,
                    v_min: float | None = None, peak_time_max: float | None = None) -> FeasibleRegion:
    """Cells meeting every given bound; ``None`` skips a bound. Diverged cells never qualify."""
    mask = ~gmap.diverged.copy()
    with np.errstate(invalid="ignore"):
        if pnon_max is not None:
            mask &= gmap.pnon_max <= pnon_max
        if overshoot_max is not None:
            mask &= gmap.overshoot <= overshoot_max
        if v_min is not None:
            mask &= gmap.vmax >= v_min
        if peak_time_max is not None:
            mask &= gmap.peak_time <= peak_time_max
    count = int(mask.sum())
    if count == 0:
        return FeasibleRegion(mask, 0, None, None)
    i, j = np.nonzero(mask)
    return FeasibleRegion(mask, count, (float(gmap.kp[i.min()]), float(gmap.kp[i.max()])),
                          (float(gmap.kd[j.min()]), float(gmap.kd[j.max()])))


def closed_loop_response(template: ControlScenario, names: Sequence[str]) -> Callable[[tuple], float]:
    """Response ``inputs -> max P_non`` of a closed-loop run.

    Recognised names: ``kp``, ``ki``, ``kd`` (force loop), ``efficiency``
    (PV overall efficiency) and ``drag_coeff`` (all axes).
    """
    allowed = {"kp", "ki", "kd", "efficiency", "drag_coeff"}
    unknown = set(names) - allowed
    if unknown:
        raise ConfigurationError(f"closed-loop response cannot vary {sorted(unknown)}")

    def response(x):
        values = dict(zip(names, x))
        sc = template
        g = sc.gains_force
        g = PidGains(values.get("kp", g.kp), values.get("ki", g.ki), values.get("kd", g.kd), g.derivative_filter)
        sc = replace(sc, gains_force=g)
        if "efficiency" in values:
            sc = replace(sc, array=replace(sc.array, efficiency=values["efficiency"]))
        if "drag_coeff" in values:
            sc = replace(sc, vehicle=replace(sc.vehicle, drag_coeff=np.full(3, values["drag_coeff"])))
        agg, _ = run_batch(sc, [sc.gains_force], [sc.gains_pitch])
        if agg[0, 5] >= 0:
            raise RuntimeError(f"closed loop diverged at step {int(agg[0, 5])}")
        return agg[0, 0]

    return response
