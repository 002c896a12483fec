"""Numerical tolerances shared by the geometry, zonoid and oracle code.

All values are read at call time from the module-level ``TOL`` object, so a
run configuration can override them for the duration of a computation::

    with override(merge=1e-8):
        ...
"""
from __future__ import annotations

import contextlib
import dataclasses
from dataclasses import dataclass


@dataclass
class Tolerances:
    # |det| of a unit-row d x d system below this is treated as singular
    pivot: float = 1e-10
    # candidate vertices closer than merge * (1 + |v|) are the same vertex
    merge: float = 1e-9
    # constraint residual allowed for feasibility / activity tests
    feasibility: float = 1e-9
    # relative singular-value cutoff for ranks and null spaces
    rank: float = 1e-10
    # maximal number of generators for sign-vector vertex enumeration
    generator_cap: int = 22

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


TOL = Tolerances()


def update(**overrides) -> None:
    """Set tolerance values in place (unknown names raise ``KeyError``)."""
    valid = {f.name for f in dataclasses.fields(Tolerances)}
    for name, value in overrides.items():
        if name not in valid:
            raise KeyError(f"unknown tolerance {name!r}")
        setattr(TOL, name, type(getattr(TOL, name))(value))


@contextlib.contextmanager
def override(**overrides):
    saved = TOL.as_dict()
    try:
        update(**overrides)
        yield TOL
    finally:
        update(**saved)
