"""Command line front end: ``hyperfaces {oracle,simulate,validate,bounds}``.

A run is described by one JSON file::

    {
      "distribution": {"kind": "cuboid", "d": 2, "intensity": 1.0},
      "k": [2],
      "pairs": [[0, 0], [0, 1]],
      "simulation": {"replicates": 1000, "seed": 7},
      "output": {"dir": "out"}
    }

``kind`` is one of ``isotropic-closed-form``, ``atoms`` (with ``directions``
and ``weights``), ``cuboid`` or ``isotropic-discretized`` (with ``n``).
Omitted blocks take their defaults; unknown keys are rejected. Exit codes are
0 on success, 2 for configuration errors, 3 when a validation check fails and
4 when the zero cell does not fit the window after the retry cap.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import oracle, simulator, tolerances, zonoid
from .simulator import SimulationConfig, SimulationNonConvergence, Target

log = logging.getLogger("hyperfaces")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NONCONVERGENCE = 0, 2, 3, 4

DIST_KINDS = ("isotropic-closed-form", "atoms", "cuboid", "isotropic-discretized")
ESTIMATOR_CHOICES = ("kface", "zero_cell", "first_moment")
CSV_COLUMNS = (
    "k", "r", "s", "estimator", "replicates",
    "oracle_value", "mc_mean", "mc_std_error", "z_score", "wall_time",
)

_DEFAULTS = {
    "simulation": {
        "replicates": 1000,
        "seed": 0,
        "window_factor": 10.0,
        "workers": 1,
        "retry_cap": 6,
        "estimators": ["kface", "first_moment"],
    },
    "validation": {"miles_realizations": 20, "seed": 0},
    "output": {"dir": "."},
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _fail(path: str, msg: str, text: str | None = None):
    line = _line_of(text, path.split(".")[-1].split("[")[0])
    where = f" (line {line})" if line else ""
    raise ConfigError(f"{path}{where}: {msg}")


def _check_keys(block: dict, allowed, path: str, text):
    if not isinstance(block, dict):
        _fail(path, "expected an object", text)
    for key in block:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else key, "unknown key", text)


def _int(value, path, text, lo=None, hi=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}", text)
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        _fail(path, f"value {value} out of range [{lo}, {hi}]", text)
    return value


def _float(value, path, text, positive=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        _fail(path, f"expected a finite number, got {value!r}", text)
    if positive and not value > 0:
        _fail(path, "must be positive", text)
    return float(value)


@dataclass
class RunConfig:
    """Validated run description; :meth:`to_dict` gives the canonical form."""

    distribution: dict
    k: list
    pairs: list | None = None
    simulation: dict = field(default_factory=lambda: dict(_DEFAULTS["simulation"]))
    validation: dict = field(default_factory=lambda: dict(_DEFAULTS["validation"]))
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: dict(_DEFAULTS["output"]))

    @property
    def d(self) -> int:
        return self.distribution["d"]

    def to_dict(self) -> dict:
        return {
            "distribution": dict(self.distribution),
            "k": list(self.k),
            "pairs": None if self.pairs is None else [list(p) for p in self.pairs],
            "simulation": dict(self.simulation),
            "validation": dict(self.validation),
            "tolerances": dict(self.tolerances),
            "output": dict(self.output),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def build_distribution(self):
        return build_distribution(self.distribution)

    def pairs_for(self, k: int) -> list[tuple[int, int]]:
        if self.pairs is None:
            return [(r, s) for r in range(k + 1) for s in range(k + 1)]
        return [(r, s) for r, s in self.pairs if r <= k and s <= k]


def _parse_distribution(raw, text) -> dict:
    allowed = ("kind", "d", "intensity", "n", "directions", "weights")
    _check_keys(raw, allowed, "distribution", text)
    kind = raw.get("kind")
    if kind not in DIST_KINDS:
        _fail("distribution.kind", f"expected one of {DIST_KINDS}, got {kind!r}", text)
    out = {"kind": kind, "intensity": _float(raw.get("intensity", 1.0), "distribution.intensity", text, True)}
    if kind == "atoms":
        for key in ("directions", "weights"):
            if key not in raw:
                _fail(f"distribution.{key}", "required for kind 'atoms'", text)
        try:
            v = np.asarray(raw["directions"], dtype=float)
            w = np.asarray(raw["weights"], dtype=float)
        except (TypeError, ValueError):
            _fail("distribution.directions", "directions and weights must be numeric arrays", text)
        if v.ndim != 2 or w.ndim != 1 or len(v) != len(w):
            _fail("distribution.directions", "need an (n, d) direction array and n weights", text)
        d = v.shape[1]
        if "d" in raw and _int(raw["d"], "distribution.d", text) != d:
            _fail("distribution.d", f"does not match direction length {d}", text)
        out.update(d=d, directions=v.tolist(), weights=w.tolist())
    else:
        if "d" not in raw:
            _fail("distribution.d", "required", text)
        out["d"] = _int(raw["d"], "distribution.d", text, 2, 8)
        if kind == "isotropic-discretized":
            out["n"] = _int(raw.get("n"), "distribution.n", text, 2)
        for key in ("n", "directions", "weights"):
            if key in raw and key not in out:
                _fail(f"distribution.{key}", f"not used by kind {kind!r}", text)
    try:
        build_distribution(out)
    except (zonoid.InvalidDistribution, ValueError) as exc:
        _fail("distribution", str(exc), text)
    return out


def build_distribution(spec: dict):
    kind, d, gh = spec["kind"], spec["d"], spec["intensity"]
    if kind == "isotropic-closed-form":
        return zonoid.Isotropic(d, gh)
    if kind == "cuboid":
        return zonoid.cuboid(d, gh)
    if kind == "isotropic-discretized":
        return zonoid.isotropic_discretized(d, spec["n"], gh)
    return zonoid.DirectionalDistribution(
        np.asarray(spec["directions"], dtype=float), np.asarray(spec["weights"], dtype=float), gh
    )


def _parse_block(raw, name, text, parsers) -> dict:
    raw = {} if raw is None else raw
    _check_keys(raw, parsers, name, text)
    out = {}
    for key, parse in parsers.items():
        value = raw.get(key, _DEFAULTS[name][key])
        out[key] = parse(value, f"{name}.{key}")
    return out


def config_from_dict(raw: dict, text: str | None = None) -> RunConfig:
    """Validate a decoded configuration; ``text`` only improves diagnostics."""
    _check_keys(raw, ("distribution", "k", "pairs", "simulation", "validation", "tolerances", "output"), "", text)
    if "distribution" not in raw:
        _fail("distribution", "required", text)
    dist = _parse_distribution(raw["distribution"], text)
    d = dist["d"]
    ks = raw.get("k", list(range(1, d + 1)))
    if not isinstance(ks, list) or not ks:
        _fail("k", "expected a nonempty list", text)
    ks = sorted({_int(k, "k", text, 1, d) for k in ks})
    pairs = raw.get("pairs")
    if pairs is not None:
        if not isinstance(pairs, list) or not pairs:
            _fail("pairs", "expected a nonempty list of [r, s]", text)
        clean = []
        for p in pairs:
            if not isinstance(p, list) or len(p) != 2:
                _fail("pairs", f"expected [r, s], got {p!r}", text)
            r, s = (_int(x, "pairs", text, 0, max(ks)) for x in p)
            if (r, s) not in clean:
                clean.append((r, s))
        pairs = sorted(clean)

    def estimators(value, path):
        if not isinstance(value, list) or not value:
            _fail(path, "expected a nonempty list", text)
        for e in value:
            if e not in ESTIMATOR_CHOICES:
                _fail(path, f"unknown estimator {e!r}", text)
        return [e for e in ESTIMATOR_CHOICES if e in value]

    sim = _parse_block(raw.get("simulation"), "simulation", text, {
        "replicates": lambda v, p: _int(v, p, text, 1),
        "seed": lambda v, p: _int(v, p, text, 0, 2**64 - 1),
        "window_factor": lambda v, p: _float(v, p, text, True),
        "workers": lambda v, p: _int(v, p, text, 1),
        "retry_cap": lambda v, p: _int(v, p, text, 0),
        "estimators": estimators,
    })
    val = _parse_block(raw.get("validation"), "validation", text, {
        "miles_realizations": lambda v, p: _int(v, p, text, 0),
        "seed": lambda v, p: _int(v, p, text, 0, 2**64 - 1),
    })
    tol_raw = raw.get("tolerances") or {}
    _check_keys(tol_raw, tolerances.TOL.as_dict(), "tolerances", text)
    tols = {k: _float(v, f"tolerances.{k}", text, True) for k, v in tol_raw.items()}
    if "generator_cap" in tols:
        tols["generator_cap"] = int(tols["generator_cap"])
    out_raw = raw.get("output") or {}
    _check_keys(out_raw, ("dir",), "output", text)
    out_dir = out_raw.get("dir", ".")
    if not isinstance(out_dir, str) or not out_dir:
        _fail("output.dir", "expected a nonempty string", text)
    return RunConfig(dist, ks, pairs, sim, val, tols, {"dir": out_dir})


def loads_config(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    return config_from_dict(raw, text)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return loads_config(text)


# --------------------------------------------------------------------------
# subcommands


def _fmt(x) -> str:
    if x is None:
        return ""
    return "%.17g" % x


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s", path)


def cmd_oracle(cfg: RunConfig) -> list[Path]:
    """Write ``moments_k{k}.json`` (moment table and bounds) for every ``k``."""
    dist = cfg.build_distribution()
    paths = []
    for k in cfg.k:
        table = oracle.build_moment_table(dist, k)
        payload = table.to_dict()
        payload["distribution"] = cfg.distribution
        payload["bounds"] = oracle.variance_bounds(dist, k).to_dict()
        path = Path(cfg.output["dir"]) / f"moments_k{k}.json"
        _write_json(path, payload)
        paths.append(path)
    return paths


def simulation_targets(cfg: RunConfig) -> list[tuple[tuple, Target]]:
    """``((k, r, s), target)`` rows for the report, in a fixed order.

    Pairs with ``s = d`` are estimated through the symmetric pair when
    ``r < d``; the pair ``(d, d)`` always goes through the zero cell.
    """
    d = cfg.d
    est = cfg.simulation["estimators"]
    rows = []
    for k in cfg.k:
        for r, s in cfg.pairs_for(k):
            if "kface" in est:
                if s < d:
                    rows.append(((k, r, s), Target("kface", k, r, s)))
                elif r < d:
                    rows.append(((k, r, s), Target("kface", k, s, r)))
            if k == d and ("zero_cell" in est or ("kface" in est and r == s == d)):
                rows.append(((k, r, s), Target("zero_cell", k, r, s)))
        if "first_moment" in est:
            rows.extend(((k, r, None), Target("first_moment", k, r)) for r in range(k + 1))
    return rows


def cmd_simulate(cfg: RunConfig, timing: bool = False) -> str:
    """Run the Monte Carlo estimators and return the CSV report text."""
    dist = cfg.build_distribution()
    rows = simulation_targets(cfg)
    sim = cfg.simulation
    scfg = SimulationConfig(
        dist, [t for _, t in rows], sim["replicates"], sim["seed"], sim["window_factor"],
        sim["workers"], sim["retry_cap"], cfg.tolerances,
    )
    log.info("simulating %d targets with %d replicates", len(rows), sim["replicates"])
    summaries = simulator.run_experiment(scfg)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for ((k, r, s), t), est in zip(rows, summaries):
        writer.writerow([
            k, r, "" if s is None else s, t.estimator, est.replicates,
            _fmt(est.oracle_value), _fmt(est.mean), _fmt(est.std_error), _fmt(est.z_score),
            _fmt(est.wall_time) if timing else "",
        ])
    text = buf.getvalue()
    path = Path(cfg.output["dir"]) / "report.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)
    return text


def cmd_bounds(cfg: RunConfig) -> dict:
    dist = cfg.build_distribution()
    phi, c, C = oracle.stability_functional(dist)
    payload = {
        "distribution": cfg.distribution,
        "variance_bounds": [oracle.variance_bounds(dist, k).to_dict() for k in range(1, cfg.d + 1)],
        "stability": {"phi": phi, "c_d": c, "C_d": C},
        "volume_variance_ratio": oracle.volume_variance_ratio(dist),
    }
    _write_json(Path(cfg.output["dir"]) / "bounds.json", payload)
    return payload


def _check(name, discrepancy, tol, **extra) -> dict:
    ok = bool(np.isfinite(discrepancy) and discrepancy <= tol)
    return {"name": name, "passed": ok, "discrepancy": float(discrepancy), "tolerance": tol, **extra}


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _random_rotation(d: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def validation_suite(dist, ks, miles_realizations: int = 20, seed: int = 0) -> list[dict]:
    """Invariant checks on one distribution; each entry has ``passed`` and ``discrepancy``."""
    d = dist.d
    rng = np.random.default_rng(seed)
    discrete = isinstance(dist, zonoid.DirectionalDistribution)
    checks = []
    kappa_ref = [1.0, 2.0, math.pi, 4.0 * math.pi / 3.0, math.pi**2 / 2.0]
    checks.append(_check("kappa", max(_rel(zonoid.kappa(j), v) for j, v in enumerate(kappa_ref)), 1e-12))

    if discrete:
        err = 0.0
        for m in range(1, d + 1):
            lhs = dist.intensity**m * zonoid.nabla_moment(dist, m)
            rhs = math.factorial(m) * zonoid.intrinsic_volume(dist.zonotope, m)
            err = max(err, _rel(lhs, rhs))
        checks.append(_check("intrinsic_volume_identity", err, 1e-12))

    sym = scale = rot = 0.0
    Q = _random_rotation(d, rng)
    for k in ks:
        for r in range(k + 1):
            for s in range(k + 1):
                val = oracle.second_moment(dist, k, r, s)
                sym = max(sym, _rel(oracle.second_moment(dist, k, s, r), val))
                for lam in (0.5, 2.0, 7.0):
                    scaled = oracle.second_moment(dist.scaled(lam), k, r, s)
                    scale = max(scale, _rel(scaled, lam ** -(r + s) * val))
                if discrete:
                    rot = max(rot, _rel(oracle.second_moment(dist.rotated(Q), k, r, s), val))
    checks.append(_check("symmetry", sym, 1e-8))
    checks.append(_check("scaling", scale, 1e-9))
    if discrete:
        checks.append(_check("rotation", rot, 1e-9))
    checks.append(_check("k1_degeneracy", _rel(oracle.second_moment(dist, 1, 0, 0), 4.0), 1e-9))

    excess = 0.0
    for k in range(1, d + 1):
        rep = oracle.variance_bounds(dist, k)
        excess = max(excess, rep.lower - rep.variance, rep.variance - rep.upper)
        if rep.phi is not None:
            excess = max(excess, rep.phi_lower - rep.phi, rep.phi - rep.phi_upper)
        cov = oracle.build_moment_table(dist, k, check=False).covariances
        eig = np.linalg.eigvalsh(0.5 * (cov + cov.T)).min()
        excess = max(excess, -eig - 1e-8 * max(np.trace(cov), 1e-300) + 1e-8)
    checks.append(_check("bounds", max(excess, 0.0), 1e-8))

    if discrete:
        worst = 0.0
        for j in range(1, d + 1):
            basis = np.linalg.qr(rng.standard_normal((d, j)))[0].T
            vp = zonoid.volume_product(zonoid.project(dist.zonotope, basis))
            lo, hi = 4.0**j / math.factorial(j), zonoid.kappa(j) ** 2
            worst = max(worst, (lo - vp) / lo, (vp - hi) / hi)
        checks.append(_check("volume_product_sandwich", max(worst, 0.0), 1e-9))

    table = oracle.build_moment_table(dist, d, check=False)
    m = table.first_moments[d]
    assembled = (table.second_moments[d, d] - m * m) / (m * m)
    checks.append(_check("volume_variance_ratio", _rel(oracle.volume_variance_ratio(dist), assembled), 1e-9))

    res = oracle.cuboid_prefactor_check(d)
    checks.append(_check(
        "cuboid_prefactor", min(res["max_rel_error"].values()), 1e-9,
        matched=res["matched"], errors=res["max_rel_error"],
    ))
    if isinstance(dist, zonoid.DirectionalDistribution) and _is_cuboid(dist):
        err = max(
            _rel(oracle.second_moment(dist, d, r, s), oracle.cuboid_closed_form(dist.intensity, d, r, s))
            for r in range(d + 1) for s in range(d + 1)
        )
        checks.append(_check("cuboid_closed_form", err, 1e-9))

    err = max(
        _rel(oracle.isotropic_gamma_form(1.0, dd, k, r, s), oracle.isotropic_closed_form(1.0, dd, k, r, s))
        for dd in range(2, 5) for k in range(1, dd + 1) for r in range(k + 1) for s in range(k + 1)
    )
    checks.append(_check("isotropic_forms", err, 1e-12))

    worst = 0.0
    for _ in range(miles_realizations):
        sample, cell = simulator.zero_cell_with_retry(dist, rng)
        for k in range(1, d + 1):
            for s in range(k + 1):
                U = rng.standard_normal((d - s, d))
                U /= np.linalg.norm(U, axis=1, keepdims=True)
                for r in range(k + 1):
                    lhs, rhs = simulator.check_miles_identity(sample, U, k, r, cell=cell)
                    worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    if miles_realizations:
        checks.append(_check("miles_identity", worst, 1e-7, realizations=miles_realizations))
    return checks


def _is_cuboid(dist) -> bool:
    d = dist.d
    if dist.n_atoms != d:
        return False
    return np.allclose(np.abs(dist.directions), np.eye(d)[np.argmax(np.abs(dist.directions), axis=1)]) and \
        np.allclose(dist.weights, 1.0 / d)


def cmd_validate(cfg: RunConfig) -> dict:
    dist = cfg.build_distribution()
    checks = validation_suite(dist, cfg.k, cfg.validation["miles_realizations"], cfg.validation["seed"])
    for c in checks:
        log.info("%-26s %s  (%.3g)", c["name"], "pass" if c["passed"] else "FAIL", c["discrepancy"])
    payload = {"distribution": cfg.distribution, "passed": all(c["passed"] for c in checks), "checks": checks}
    _write_json(Path(cfg.output["dir"]) / "validate.json", payload)
    return payload


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperfaces", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("oracle", "exact moment tables"),
        ("simulate", "Monte Carlo estimates as CSV"),
        ("validate", "invariant checks, pass/fail JSON"),
        ("bounds", "variance bounds and stability functional"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--workers", type=int, help="override the worker count")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            p.add_argument("--timing", action="store_true", help="fill the wall_time column")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    raw = cfg.to_dict()
    if args.seed is not None:
        raw["simulation"]["seed"] = args.seed
        raw["validation"]["seed"] = args.seed
    if args.workers is not None:
        raw["simulation"]["workers"] = args.workers
    if args.out is not None:
        raw["output"]["dir"] = args.out
    return config_from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        with tolerances.override(**cfg.tolerances):
            if args.command == "oracle":
                cmd_oracle(cfg)
            elif args.command == "simulate":
                cmd_simulate(cfg, timing=args.timing)
            elif args.command == "bounds":
                cmd_bounds(cfg)
            else:
                if not cmd_validate(cfg)["passed"]:
                    log.error("validation failed")
                    return EXIT_VALIDATION
    except SimulationNonConvergence as exc:
        log.error("simulation did not converge: %s", exc)
        return EXIT_NONCONVERGENCE
    except oracle.InvariantViolation as exc:
        log.error("invariant violated: %s", exc)
        return EXIT_VALIDATION
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
