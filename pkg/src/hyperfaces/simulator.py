"""Monte Carlo estimation of typical-face moments from the hyperplane process.

Every estimator works with the cell of the origin and faces through the
origin only:

* ``zero_cell``: the zero cell is the volume-weighted typical cell, so
  ``E(L_r L_s)(Z) = E[(L_r L_s / V_d)(Z_0)] / γ``.
* ``kface``: ``E(L_r L_s)(Z^(k))`` from the ``k``-faces through 0 of the
  process augmented by ``d-s`` hyperplanes through 0 whose normals are drawn
  from the directional distribution, weighted by ``∇_{d-s}``.
* ``first_moment``: the same construction with ``s = k`` and the functional
  ``L_r / L_k``, which estimates ``E L_r(Z^(k))``.

Replicates draw from independent streams keyed by (master seed, replicate
index), so results do not depend on the number of workers.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import oracle, tolerances, zonoid
from .geometry import (
    DegenerateInput,
    EmptySection,
    GeometryError,
    Hyperplane,
    Unbounded,
    VPolytope,
    face_content,
    face_contents,
    null_space,
    parallelepiped_volume,
    polytope_from_inequalities,
    section_inequalities,
)
from .zonoid import Isotropic

log = logging.getLogger(__name__)

__all__ = [
    "WindowTooSmall",
    "DegeneratePosition",
    "SimulationNonConvergence",
    "ProcessSample",
    "EstimateSummary",
    "Target",
    "SimulationConfig",
    "sample_process",
    "extend_sample",
    "zero_cell",
    "zero_cell_with_retry",
    "origin_k_faces",
    "check_miles_identity",
    "replicate_values",
    "summarize",
    "run_experiment",
    "estimate_typical_cell_moment",
    "estimate_kface_moment",
    "estimate_first_moment",
]

ESTIMATORS = ("kface", "zero_cell", "first_moment")


class WindowTooSmall(Unbounded):
    """The zero cell is unbounded in, or not well inside, the sampling window."""


class DegeneratePosition(GeometryError):
    """Added hyperplanes through the origin are not in general position."""


class SimulationNonConvergence(RuntimeError):
    """The zero cell did not fit the window within the retry cap."""


@dataclass(frozen=True, eq=False)
class ProcessSample:
    """Hyperplanes ``<x, normal> = offset`` of one realization hitting ``B(0, R)``."""

    normals: np.ndarray
    offsets: np.ndarray
    window_radius: float
    seed_path: tuple = ()

    @property
    def d(self) -> int:
        return self.normals.shape[1]

    def __len__(self) -> int:
        return len(self.offsets)

    @property
    def hyperplanes(self) -> list[Hyperplane]:
        return [Hyperplane(n, t) for n, t in zip(self.normals, self.offsets)]


def _offsets(rng: np.random.Generator, size: int, lo: float, hi: float) -> np.ndarray:
    # |t| uniform on (lo, hi] with a fair sign; |t| < 1e-12 is resampled
    mag = rng.uniform(lo, hi, size=size)
    bad = mag < 1e-12
    while np.any(bad):
        mag[bad] = rng.uniform(lo, hi, size=int(bad.sum()))
        bad = mag < 1e-12
    return mag * rng.choice((-1.0, 1.0), size=size)


def sample_process(dist, window_radius: float, rng: np.random.Generator, seed_path=()) -> ProcessSample:
    """Poisson hyperplanes hitting ``B(0, window_radius)``.

    The count is Poisson with mean ``2 γ̂ R``; each hyperplane gets a normal
    from the directional distribution and an offset uniform on ``[-R, R]``.
    """
    if window_radius <= 0:
        raise ValueError("window radius must be positive")
    n = rng.poisson(2.0 * dist.intensity * window_radius)
    normals, _ = dist.sample_directions(rng, n)
    offsets = _offsets(rng, n, 0.0, window_radius)
    return ProcessSample(normals.reshape(n, dist.d), offsets, float(window_radius), tuple(seed_path))


def extend_sample(sample: ProcessSample, dist, new_radius: float, rng: np.random.Generator) -> ProcessSample:
    """Superpose the hyperplanes with ``R < |offset| <= new_radius``.

    The result has the law of a fresh sample in the larger window and agrees
    with ``sample`` inside the old one, so enlarging never biases the zero cell.
    """
    old = sample.window_radius
    n = rng.poisson(2.0 * dist.intensity * (new_radius - old))
    normals, _ = dist.sample_directions(rng, n)
    offsets = _offsets(rng, n, old, new_radius)
    return ProcessSample(
        np.vstack([sample.normals, normals.reshape(n, dist.d)]),
        np.concatenate([sample.offsets, offsets]),
        float(new_radius),
        sample.seed_path,
    )


def _origin_halfspaces(sample: ProcessSample):
    sign = np.sign(sample.offsets)
    return sample.normals * sign[:, None], np.abs(sample.offsets)


def zero_cell(sample: ProcessSample) -> VPolytope:
    """The cell containing the origin, required to lie in ``B(0, R/2)``."""
    if len(sample) == 0:
        raise WindowTooSmall("empty sample")
    A, b = _origin_halfspaces(sample)
    try:
        cell = polytope_from_inequalities(A, b, method="dual")
    except Unbounded as exc:
        raise WindowTooSmall(str(exc)) from exc
    if np.linalg.norm(cell.vertices, axis=1).max() > 0.5 * sample.window_radius:
        raise WindowTooSmall("zero cell reaches beyond half the window radius")
    return cell


@lru_cache(maxsize=64)
def _inradius(dist) -> float:
    if isinstance(dist, Isotropic):
        return dist.radius
    return zonoid.inradius(dist.zonotope)


def initial_radius(dist, window_factor: float = 10.0) -> float:
    """``window_factor`` times the larger of ``d/γ̂`` and ``1/(2 r)``.

    ``r`` is the inradius of the associated zonotope. The distance from 0 to
    the zero-cell boundary in direction ``u`` is exponential with rate
    ``2 h(Π, u)``, so the second term keeps strongly anisotropic processes,
    whose cells are long and thin, from exhausting the retry cap.
    """
    return window_factor * max(dist.d / dist.intensity, 0.5 / _inradius(dist))


def zero_cell_with_retry(dist, rng, window_factor: float = 10.0, retry_cap: int = 6, seed_path=()):
    """Sample until the zero cell fits, doubling the window at most ``retry_cap`` times."""
    sample = sample_process(dist, initial_radius(dist, window_factor), rng, seed_path)
    for attempt in range(retry_cap + 1):
        try:
            return sample, zero_cell(sample)
        except WindowTooSmall:
            if attempt == retry_cap:
                break
            sample = extend_sample(sample, dist, 2.0 * sample.window_radius, rng)
    raise SimulationNonConvergence(f"zero cell did not fit after {retry_cap} doublings")


# --------------------------------------------------------------------------
# faces through the origin


def _cell_constraints(cell: VPolytope, sample: ProcessSample):
    A, b = _origin_halfspaces(sample)
    used = sorted(set().union(*cell.facet_incidence))
    return A[used], b[used]


def _section_cell(A, b, U: np.ndarray, d: int):
    """``Z_0 ∩ U^⊥`` in coordinates of an orthonormal basis of ``U^⊥``."""
    m = len(U)
    if m == d:
        return VPolytope.point(np.zeros(0)), np.zeros((0, d))
    try:
        Q = null_space(U, d)
    except DegenerateInput as exc:
        raise DegeneratePosition(str(exc)) from exc
    A_L, b_L = section_inequalities(A, b, Q)
    return polytope_from_inequalities(A_L, b_L, check_bounded=False), Q


def _pieces(A, b, U: np.ndarray, k: int, d: int):
    """Yield ``(polytope in L-coordinates, basis of L)`` for every member of ``C_k``."""
    m = len(U)
    s = d - m
    if not 0 <= s <= k <= d:
        raise ValueError("need d - len(added) <= k <= d")
    for inside in itertools.combinations(range(m), d - k):
        rest = [i for i in range(m) if i not in inside]
        try:
            Q = null_space(U[list(inside)], d)
        except DegenerateInput as exc:
            raise DegeneratePosition(str(exc)) from exc
        A_L, b_L = section_inequalities(A, b, Q)
        N = U[rest] @ Q.T
        if len(rest) and np.linalg.matrix_rank(N) < len(rest):
            raise DegeneratePosition("added hyperplanes are not in general position")
        for eps in itertools.product((1.0, -1.0), repeat=len(rest)):
            A_p = np.vstack([A_L, np.asarray(eps)[:, None] * N]) if rest else A_L
            b_p = np.concatenate([b_L, np.zeros(len(rest))])
            yield polytope_from_inequalities(A_p, b_p, check_bounded=False), Q


def origin_k_faces(sample: ProcessSample, added_directions, k: int, cell: VPolytope | None = None) -> list[VPolytope]:
    """All ``k``-faces containing 0 of the arrangement ``sample ∪ {u^⊥ : u in added}``.

    With ``d - s`` added directions there are ``C(d-s, d-k) 2^{k-s}`` of them,
    returned in ambient coordinates.
    """
    U = np.atleast_2d(np.asarray(added_directions, dtype=float)).reshape(-1, sample.d)
    cell = zero_cell(sample) if cell is None else cell
    if len(U) == 0:
        if k != sample.d:
            raise ValueError("without added hyperplanes only k = d is possible")
        return [cell]
    if len(U) > 1 and parallelepiped_volume(U) <= 1e-10:
        raise DegeneratePosition("added directions are linearly dependent")
    A, b = _cell_constraints(cell, sample)
    return [p.mapped(Q) for p, Q in _pieces(A, b, U, k, sample.d)]


def check_miles_identity(sample: ProcessSample, added_directions, k: int, r: int, cell: VPolytope | None = None):
    """Both sides of the multiplicity identity for ``Σ_{K∈C_k} L_r(K)``.

    The right side regroups the sum over sections of the zero cell by
    ``(d-j)``-subsets of the added hyperplanes, with multiplicity
    ``C(d-j, k-j) 2^{k-j}``.
    """
    d = sample.d
    U = np.atleast_2d(np.asarray(added_directions, dtype=float)).reshape(-1, d)
    s = d - len(U)
    if not 0 <= r <= k:
        raise ValueError("need 0 <= r <= k")
    cell = zero_cell(sample) if cell is None else cell
    if len(U) > 1 and parallelepiped_volume(U) <= 1e-10:
        raise DegeneratePosition("added directions are linearly dependent")
    A, b = _cell_constraints(cell, sample)
    if len(U) == 0:
        lhs = float(face_contents(cell, d)[r])
        return lhs, lhs
    lhs = sum(float(face_contents(p, k)[r]) for p, _ in _pieces(A, b, U, k, d))
    rhs = 0.0
    for j in range(max(r, s), k + 1):
        mult = math.comb(d - j, k - j) * 2.0 ** (k - j)
        for sub in itertools.combinations(range(len(U)), d - j):
            P, _ = _section_cell(A, b, U[list(sub)], d)
            rhs += mult * float(face_contents(P, j)[r] if P.ambient_dim else (1.0 if r == 0 else 0.0))
    return lhs, rhs


# --------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class Target:
    estimator: str
    k: int
    r: int
    s: int | None = None

    def label(self) -> str:
        s = "" if self.s is None else self.s
        return f"{self.estimator}(k={self.k},r={self.r},s={s})"


@dataclass
class EstimateSummary:
    target: Target
    mean: float
    std_error: float
    replicates: int
    oracle_value: float | None = None
    z_score: float | None = None
    wall_time: float | None = None

    @property
    def label(self) -> str:
        return self.target.label()


def validate_target(t: Target, d: int) -> None:
    if t.estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {t.estimator!r}")
    if not 1 <= t.k <= d or not 0 <= t.r <= t.k:
        raise ValueError(f"invalid target {t}")
    if t.estimator == "kface" and not (t.s is not None and 0 <= t.s <= min(t.k, d - 1)):
        raise ValueError("kface estimator needs 0 <= s <= min(k, d-1)")
    if t.estimator == "zero_cell" and (t.k != d or t.s is None or not 0 <= t.s <= d):
        raise ValueError("zero_cell estimator needs k = d and 0 <= s <= d")


def oracle_value(dist, t: Target) -> float:
    if t.estimator == "first_moment":
        return oracle.first_moment(dist, t.k, t.r)
    return oracle.second_moment(dist, t.k, t.r, t.s)


def replicate_values(
    dist,
    targets: Sequence[Target],
    rng: np.random.Generator,
    gamma: float,
    window_factor: float = 10.0,
    retry_cap: int = 6,
    seed_path=(),
) -> np.ndarray:
    """One realization's contribution to every target (common random numbers)."""
    d = dist.d
    sample, cell = zero_cell_with_retry(dist, rng, window_factor, retry_cap, seed_path)
    U, _ = dist.sample_directions(rng, d)
    A, b = _cell_constraints(cell, sample)
    gh = dist.intensity
    pieces_cache: dict = {}
    content_cache: dict = {}

    def content_sum(m: int, k: int, r: int, normalize: bool) -> float:
        # sum over C_k of L_r, or of L_r / L_k when normalizing
        if (m, k) not in pieces_cache:
            pieces_cache[(m, k)] = [p for p, _ in _pieces(A, b, U[:m], k, d)]
        pcs = pieces_cache[(m, k)]
        total = 0.0
        for i, p in enumerate(pcs):
            vals = []
            for q in ((r, k) if normalize else (r,)):
                key = (m, k, i, q)
                if key not in content_cache:
                    content_cache[key] = face_content(p, q)
                vals.append(content_cache[key])
            total += vals[0] / vals[1] if normalize else vals[0]
        return total

    cell_contents = None
    out = np.empty(len(targets))
    for i, t in enumerate(targets):
        if t.estimator == "zero_cell":
            if cell_contents is None:
                cell_contents = face_contents(cell, d)
            out[i] = cell_contents[t.r] * cell_contents[t.s] / cell_contents[d] / gamma
            continue
        m = d - (t.s if t.estimator == "kface" else t.k)
        w = parallelepiped_volume(U[:m]) if m else 1.0
        if w <= 1e-12:
            out[i] = 0.0
            continue
        scale = w * gh**m / (gamma * math.factorial(m) * math.comb(d, t.k))
        out[i] = scale * content_sum(m, t.k, t.r, t.estimator == "first_moment")
    return out


def summarize(target: Target, values: np.ndarray, reference: float | None = None) -> EstimateSummary:
    n = len(values)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    # a spread at round-off level means the quantity is deterministic
    if se <= 1e-13 * max(abs(mean), 1.0):
        se = 0.0
    z = None
    if reference is not None and se > 0:
        z = (mean - reference) / se
    return EstimateSummary(target, mean, se, n, reference, z)


@dataclass
class SimulationConfig:
    dist: object
    targets: list
    replicates: int
    seed: int = 0
    window_factor: float = 10.0
    workers: int = 1
    retry_cap: int = 6
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for t in self.targets:
            validate_target(t, self.dist.d)


def _replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _run_block(args) -> np.ndarray:
    cfg, gamma, start, stop = args
    with tolerances.override(**cfg.tolerances):
        rows = [
            replicate_values(
                cfg.dist, cfg.targets, _replicate_rng(cfg.seed, i), gamma,
                cfg.window_factor, cfg.retry_cap, seed_path=(cfg.seed, i),
            )
            for i in range(start, stop)
        ]
    return np.asarray(rows).reshape(stop - start, len(cfg.targets))


def simulate_values(cfg: SimulationConfig) -> np.ndarray:
    """Per-replicate values, shape ``(replicates, len(targets))``, in replicate order."""
    gamma = oracle.cell_intensity(cfg.dist)
    n = cfg.replicates
    if cfg.workers == 1:
        return _run_block((cfg, gamma, 0, n))
    size = max(1, math.ceil(n / (4 * cfg.workers)))
    blocks = [(cfg, gamma, a, min(a + size, n)) for a in range(0, n, size)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        parts = list(pool.map(_run_block, blocks))
    return np.vstack(parts)


def run_experiment(cfg: SimulationConfig) -> list[EstimateSummary]:
    """Estimate every target and compare with the oracle."""
    t0 = time.perf_counter()
    values = simulate_values(cfg)
    elapsed = time.perf_counter() - t0
    out = []
    for i, t in enumerate(cfg.targets):
        summary = summarize(t, values[:, i], oracle_value(cfg.dist, t))
        summary.wall_time = elapsed
        out.append(summary)
    return out


def _single(dist, target: Target, replicates: int, rng, **kw) -> EstimateSummary:
    cfg = SimulationConfig(dist, [target], replicates, seed=int(rng.integers(2**63)), **kw)
    return run_experiment(cfg)[0]


def estimate_typical_cell_moment(dist, r: int, s: int, replicates: int, rng, **kw) -> EstimateSummary:
    """``E(L_r L_s)(Z)`` from ``E[(L_r L_s / V_d)(Z_0)] / γ``."""
    return _single(dist, Target("zero_cell", dist.d, r, s), replicates, rng, **kw)


def estimate_kface_moment(dist, k: int, r: int, s: int, replicates: int, rng, **kw) -> EstimateSummary:
    """``E(L_r L_s)(Z^(k))`` from ``∇``-weighted faces through the origin (``s < d``)."""
    return _single(dist, Target("kface", k, r, s), replicates, rng, **kw)


def estimate_first_moment(dist, k: int, r: int, replicates: int, rng, **kw) -> EstimateSummary:
    """``E L_r(Z^(k))`` from ``L_r / L_k`` of the zero cell of a random ``k``-section."""
    return _single(dist, Target("first_moment", k, r), replicates, rng, **kw)
