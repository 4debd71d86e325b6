"""Renewal (Volterra) equations for potential-weighted scale functions.

For a nonnegative locally bounded potential ``f`` the weighted scale
functions solve convolution equations of the second kind driven by the
0-scale function ``W``::

    Wf(u, b) = W(u - b) + int_b^u W(u - z) f(z) Wf(z, b) dz
    Zf(u, b) = 1        + int_b^u W(u - z) f(z) Zf(z, b) dz

Both are marched on a uniform grid with the trapezoidal product rule: the
kernel is sampled exactly on the node differences, the unknown enters through
its node values.  ``W(0) = 0`` (unbounded variation) kills the diagonal
weight, so the march is explicit.  Derivative columns come from the
differentiated equations with the same quadrature, never from differencing
the value columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import LevyModel
from .potentials import UnivariatePotential
from .scale import ScaleTable, _w_deriv_array, _wq_array, w_prime_at_zero

__all__ = ["VolterraSolution", "solve_w_f", "solve_z_f"]


@dataclass
class VolterraSolution:
    """Weighted scale function tables on a uniform grid from the barrier ``b``.

    ``base`` holds the ``Wf`` table, ``z_table`` the ``Zf`` table; either may
    be absent depending on which solve produced the object.  Table grids carry
    the offset ``u - b``.
    """

    b: float
    grid_step: float
    base: Optional[ScaleTable] = None
    z_table: Optional[ScaleTable] = None

    @property
    def nodes(self) -> np.ndarray:
        table = self.base if self.base is not None else self.z_table
        return self.b + table.grid

    @property
    def w(self) -> np.ndarray:
        return self.base.w_values

    @property
    def w_deriv(self) -> np.ndarray:
        return self.base.w_deriv

    @property
    def z(self) -> np.ndarray:
        return self.z_table.w_values

    @property
    def z_deriv(self) -> np.ndarray:
        return self.z_table.w_deriv


def _kernel_arrays(model: LevyModel, n: int, h: float):
    """0-scale kernel and its derivative on the difference lattice ``k*h``."""
    lattice = h * np.arange(n + 1)
    k = _wq_array(model, 0.0, lattice)
    kp = np.empty_like(k)
    kp[0] = w_prime_at_zero(model)
    kp[1:] = _w_deriv_array(model, 0.0, lattice[1:])
    if not (np.all(np.isfinite(k)) and np.all(np.isfinite(kp))):
        raise ArithmeticError("non-finite 0-scale kernel values on the solve lattice")
    return k, kp


def _march(kernel: np.ndarray, fvals: np.ndarray, h: float, inhom: np.ndarray) -> np.ndarray:
    """Explicit product-trapezoid march for one renewal equation."""
    n1 = inhom.size
    phi = np.empty(n1)
    g = np.empty(n1)
    phi[0] = inhom[0]
    g[0] = fvals[0] * phi[0]
    for i in range(1, n1):
        acc = 0.5 * kernel[i] * g[0]
        if i > 1:
            acc += kernel[i - 1 : 0 : -1].dot(g[1:i])
        phi[i] = inhom[i] + h * acc
        g[i] = fvals[i] * phi[i]
    return phi


def _trapz_column(kp: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid of ``kp(u_i - z) g(z)`` over ``[b, u_i]`` for every i at once."""
    n1 = g.size
    conv = np.convolve(kp[:n1], g)[:n1]
    return h * (conv - 0.5 * kp[:n1] * g[0] - 0.5 * kp[0] * g)


def _solve_tables(
    model: LevyModel,
    f: UnivariatePotential,
    b: float,
    hi: float,
    n: int,
    want_w: bool,
    want_z: bool,
) -> VolterraSolution:
    if hi <= b:
        raise ValueError(f"solve interval is empty: hi={hi} <= b={b}")
    if n < 16:
        raise ValueError(f"need at least 16 grid intervals, got {n}")
    h = (hi - b) / n
    nodes = b + h * np.arange(n + 1)
    nodes[-1] = hi
    fvals = f.eval_array(nodes)
    kernel, kp = _kernel_arrays(model, n, h)

    sol = VolterraSolution(b=float(b), grid_step=h)
    note = f"renewal solve against potential {f.name or 'f'} on [{b}, {hi}]"
    if want_w:
        w = _march(kernel, fvals, h, inhom=kernel.copy())
        if not np.all(np.isfinite(w)):
            raise ArithmeticError("renewal march produced non-finite W values")
        wp = kp + _trapz_column(kp, fvals * w, h)
        sol.base = ScaleTable(
            grid_lo=0.0, grid_hi=hi - b, n=n + 1, w_values=w, w_deriv=wp,
            normalization_note=note,
        )
    if want_z:
        z = _march(kernel, fvals, h, inhom=np.ones(n + 1))
        if not np.all(np.isfinite(z)):
            raise ArithmeticError("renewal march produced non-finite Z values")
        zp = _trapz_column(kp, fvals * z, h)
        sol.z_table = ScaleTable(
            grid_lo=0.0, grid_hi=hi - b, n=n + 1, w_values=z, w_deriv=zp,
            normalization_note=note,
        )
    return sol


def solve_w_f(
    model: LevyModel, f: UnivariatePotential, b: float, hi: float, n: int
) -> VolterraSolution:
    """Solve the ``Wf`` renewal equation on ``[b, hi]`` with ``n`` grid intervals."""
    return _solve_tables(model, f, b, hi, n, want_w=True, want_z=False)


def solve_z_f(
    model: LevyModel, f: UnivariatePotential, b: float, hi: float, n: int
) -> VolterraSolution:
    """Solve the ``Zf`` renewal equation on ``[b, hi]`` with ``n`` grid intervals."""
    return _solve_tables(model, f, b, hi, n, want_w=False, want_z=True)


def solve_w_z_f(
    model: LevyModel, f: UnivariatePotential, b: float, hi: float, n: int
) -> VolterraSolution:
    """Solve both equations in one pass (shared kernel and potential samples)."""
    return _solve_tables(model, f, b, hi, n, want_w=True, want_z=True)
