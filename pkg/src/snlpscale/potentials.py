"""Bounded nonnegative potentials weighting the path functionals.

A univariate potential maps the process position to a rate; a bivariate
potential maps ``(running supremum, position)`` pairs.  Both declare a finite
sup-norm bound up front: the finiteness of every derived quantity rests on
that bound, so out-of-range evaluations are hard errors rather than clamps.

The named builders at the bottom are the selector grammar shared by the CLI
and the Monte Carlo verifier, keeping the deterministic and stochastic sides
provably pointed at the same function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "UnivariatePotential",
    "BivariatePotential",
    "parse_bivariate",
    "parse_univariate",
    "parse_g",
]


def _apply_vectorized(func, *arrays):
    """Apply a scalar-or-vector callable to broadcast arrays of floats."""
    try:
        out = np.asarray(func(*arrays), dtype=float)
        if out.shape == np.broadcast(*arrays).shape:
            return out
    except (TypeError, ValueError):
        pass
    flat = np.broadcast_arrays(*arrays)
    it = np.nditer(flat[0], flags=["multi_index"])
    out = np.empty(flat[0].shape)
    while not it.finished:
        idx = it.multi_index
        out[idx] = func(*(arr[idx] for arr in flat))
        it.iternext()
    return out


def _check_range(vals: np.ndarray, bound: float, label: str) -> np.ndarray:
    tol = 1e-12 * max(1.0, bound)
    if np.any(vals < -tol) or np.any(vals > bound + tol):
        bad = float(vals[np.argmax(np.abs(vals - np.clip(vals, 0.0, bound)))])
        raise ValueError(
            f"{label}: value {bad} outside the declared range [0, {bound}]"
        )
    return vals


@dataclass(frozen=True)
class UnivariatePotential:
    """Nonnegative map ``x -> f(x)`` with declared sup-norm ``bound``."""

    func: Callable[[float], float]
    bound: float
    name: str = ""

    def __post_init__(self):
        if self.bound < 0.0:
            raise ValueError("potential bound must be >= 0")

    def __call__(self, x: float) -> float:
        return float(self.eval_array(np.asarray([x], dtype=float))[0])

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        vals = _apply_vectorized(self.func, xs)
        return _check_range(vals, self.bound, self.name or "univariate potential")


@dataclass(frozen=True)
class BivariatePotential:
    """Nonnegative map ``(s, x) -> f(s, x)`` with declared sup-norm ``bound``.

    ``s`` is the running supremum coordinate and ``x`` the position; on paths
    of the process ``s >= x`` always holds, but the map must be defined on the
    full rectangle that solvers sweep (``x`` down to the lower barrier).
    """

    func: Callable[[float, float], float]
    bound: float
    name: str = ""

    def __post_init__(self):
        if self.bound < 0.0:
            raise ValueError("potential bound must be >= 0")

    def __call__(self, s: float, x: float) -> float:
        return float(self.eval_pairs(np.asarray([s]), np.asarray([x]))[0])

    def eval_pairs(self, s: np.ndarray, x: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        vals = _apply_vectorized(self.func, s, x)
        return _check_range(vals, self.bound, self.name or "bivariate potential")

    def frozen(self, s: float) -> UnivariatePotential:
        """Slice at a fixed supremum level: ``x -> f(s, x)``."""
        s = float(s)
        return UnivariatePotential(
            func=lambda x, _s=s, _f=self.func: _f(_s, x),
            bound=self.bound,
            name=f"{self.name or 'bivariate'}@s={s:g}",
        )

    @staticmethod
    def from_univariate(f: UnivariatePotential) -> "BivariatePotential":
        """Lift a position-only potential to the ``(s, x)`` signature."""
        return BivariatePotential(
            func=lambda s, x, _f=f.func: _f(x) + 0.0 * s,
            bound=f.bound,
            name=f.name,
        )


# ---------------------------------------------------------------------------
# Named builders (CLI selector grammar)
# ---------------------------------------------------------------------------


def _split_spec(spec: str, expected: int, flag: str):
    name, _, argstr = spec.partition(":")
    args = [a for a in argstr.split(",") if a] if argstr else []
    if len(args) != expected:
        raise ValueError(
            f"{flag}: '{name}' takes {expected} argument(s), got '{spec}'"
        )
    try:
        return name, [float(a) for a in args]
    except ValueError as exc:
        raise ValueError(f"{flag}: non-numeric argument in '{spec}'") from exc


def parse_bivariate(spec: str, domain_width: float, flag: str = "--potential") -> BivariatePotential:
    """Build a named bivariate potential.

    Grammar: ``const:q`` (constant q), ``reflected:c`` (``c*(s-x)``),
    ``indicator:c,r`` (``c*1{s-x>r}``), ``level:c,r`` (``c*1{x>r}``).
    ``domain_width`` sizes the declared bound of the reflected family.
    """
    name = spec.partition(":")[0]
    if name == "const":
        _, (q,) = _split_spec(spec, 1, flag)
        if q < 0:
            raise ValueError(f"{flag}: const level must be >= 0")
        return BivariatePotential(lambda s, x: q + 0.0 * s + 0.0 * x, bound=q, name=spec)
    if name == "reflected":
        _, (c,) = _split_spec(spec, 1, flag)
        if c < 0:
            raise ValueError(f"{flag}: reflected coefficient must be >= 0")
        bound = 2.0 * c * max(domain_width, 1e-12)
        return BivariatePotential(
            lambda s, x: c * np.clip(s - x, 0.0, None), bound=bound, name=spec
        )
    if name == "indicator":
        _, (c, r) = _split_spec(spec, 2, flag)
        if c < 0:
            raise ValueError(f"{flag}: indicator height must be >= 0")
        return BivariatePotential(
            lambda s, x: c * ((s - x) > r), bound=c, name=spec
        )
    if name == "level":
        _, (c, r) = _split_spec(spec, 2, flag)
        if c < 0:
            raise ValueError(f"{flag}: level height must be >= 0")
        return BivariatePotential(lambda s, x: c * (x > r) + 0.0 * s, bound=c, name=spec)
    raise ValueError(f"{flag}: unknown potential '{name}' in '{spec}'")


def parse_univariate(spec: str, flag: str = "--potential") -> UnivariatePotential:
    """Build a named position-only potential: ``const:q`` or ``level:c,r``."""
    name = spec.partition(":")[0]
    if name == "const":
        _, (q,) = _split_spec(spec, 1, flag)
        if q < 0:
            raise ValueError(f"{flag}: const level must be >= 0")
        return UnivariatePotential(lambda x: q + 0.0 * x, bound=q, name=spec)
    if name == "level":
        _, (c, r) = _split_spec(spec, 2, flag)
        if c < 0:
            raise ValueError(f"{flag}: level height must be >= 0")
        return UnivariatePotential(lambda x: c * (x > r), bound=c, name=spec)
    raise ValueError(
        f"{flag}: '{name}' is not a position-only potential (use const or level)"
    )


def parse_g(spec: str, flag: str = "--g") -> Callable[[np.ndarray], np.ndarray]:
    """Bounded weight of the supremum at the down-exit: ``one``, ``identity``, ``const:c``."""
    name = spec.partition(":")[0]
    if name == "one":
        return lambda z: np.ones_like(np.asarray(z, dtype=float))
    if name == "identity":
        return lambda z: np.asarray(z, dtype=float)
    if name == "const":
        _, (c,) = _split_spec(spec, 1, flag)
        return lambda z: c * np.ones_like(np.asarray(z, dtype=float))
    raise ValueError(f"{flag}: unknown weight '{name}' in '{spec}'")
