"""Spectrally negative Levy models: Laplace exponents, inverses, tilts.

Two families are supported, both with a nonzero Gaussian part (so the paths
have unbounded variation):

* ``BROWNIAN_DRIFT`` -- linear drift plus Brownian motion,
  ``psi(lam) = mu*lam + sigma^2*lam^2/2``.
* ``EXP_JUMP_DIFFUSION`` -- the same diffusion plus a compound Poisson stream
  of downward exponential jumps with intensity ``jump_rate`` and mean absolute
  size ``jump_mean``, giving
  ``psi(lam) = mu*lam + sigma^2*lam^2/2 - jump_rate*lam/(eta + lam)`` with
  ``eta = 1/jump_mean``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Family",
    "DriftRegime",
    "LevyModel",
    "make_brownian",
    "make_exp_jump_diffusion",
]

_ArrayLike = Union[float, np.ndarray]


class Family(str, enum.Enum):
    BROWNIAN_DRIFT = "brownian_drift"
    EXP_JUMP_DIFFUSION = "exp_jump_diffusion"


class DriftRegime(enum.Enum):
    DRIFTS_TO_PLUS_INFINITY = "drifts_to_plus_infinity"
    DRIFTS_TO_MINUS_INFINITY = "drifts_to_minus_infinity"
    OSCILLATES = "oscillates"


class RootFindingError(RuntimeError):
    """Raised when the inverse of the Laplace exponent fails to converge."""


@dataclass(frozen=True)
class LevyModel:
    """Immutable spectrally negative Levy process description.

    Attributes:
        family: process family tag.
        mu: linear drift per unit time.
        sigma: Gaussian coefficient, strictly positive for both families.
        jump_rate: Poisson intensity of downward jumps (jump family only).
        jump_mean: mean absolute jump size, ``1/eta`` (jump family only).
    """

    family: Family
    mu: float
    sigma: float
    jump_rate: float = 0.0
    jump_mean: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError(
                "sigma must be > 0: a vanishing Gaussian part would give paths "
                "of bounded variation, which this library does not support"
            )
        if self.family is Family.BROWNIAN_DRIFT:
            if self.jump_rate != 0.0:
                raise ValueError("BROWNIAN_DRIFT takes jump_rate == 0")
        else:
            if self.jump_rate < 0.0:
                raise ValueError("jump_rate must be >= 0")
            if self.jump_mean <= 0.0:
                raise ValueError("jump_mean must be > 0")

    # ------------------------------------------------------------------
    # Laplace exponent and its analytic derivatives
    # ------------------------------------------------------------------

    @property
    def eta(self) -> float:
        """Rate parameter of the exponential jump law, ``1/jump_mean``."""
        return 1.0 / self.jump_mean

    def psi(self, lam: _ArrayLike) -> _ArrayLike:
        """Laplace exponent ``psi(lam)`` for real ``lam >= 0``."""
        arr = np.asarray(lam, dtype=float)
        if np.any(arr < 0.0):
            raise ValueError("psi is defined for lam >= 0 only")
        out = self._psi_any(arr)
        return float(out) if np.isscalar(lam) or arr.ndim == 0 else out

    def _psi_any(self, beta):
        """Exponent evaluated without domain checks; accepts complex arrays."""
        out = self.mu * beta + 0.5 * self.sigma**2 * beta * beta
        if self.jump_rate > 0.0:
            out = out - self.jump_rate * beta / (self.eta + beta)
        return out

    def psi_derivative(self, lam: _ArrayLike) -> _ArrayLike:
        arr = np.asarray(lam, dtype=float)
        out = self.mu + self.sigma**2 * arr
        if self.jump_rate > 0.0:
            out = out - self.jump_rate * self.eta / (self.eta + arr) ** 2
        return float(out) if np.isscalar(lam) or arr.ndim == 0 else out

    def psi_prime_at_zero(self) -> float:
        """Right derivative of the exponent at 0, computed analytically."""
        return self.mu - self.jump_rate * self.jump_mean

    # ------------------------------------------------------------------
    # Right inverse of psi
    # ------------------------------------------------------------------

    def phi(self, q: float) -> float:
        """Largest nonnegative root of ``psi(lam) = q``.

        Brackets the root above the convexity minimum of ``psi``, bisects
        to near machine precision and finishes with a few Newton steps.

        Raises:
            RootFindingError: if the bracketing or bisection fails to
                converge (the message carries the bracket state).
        """
        if q < 0.0:
            raise ValueError("phi is defined for q >= 0 only")
        if q == 0.0 and self.psi_prime_at_zero() >= 0.0:
            return 0.0

        # psi is strictly convex; beyond its minimizer it is strictly
        # increasing, so the largest root lives in [lam_min, inf).
        lam_min = 0.0
        if self.psi_prime_at_zero() < 0.0:
            hi = 1.0
            while self.psi_derivative(hi) <= 0.0:
                hi *= 2.0
                if hi > 1e12:
                    raise RootFindingError(
                        f"phi: could not bracket the exponent minimum, hi={hi}"
                    )
            lo = 0.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if self.psi_derivative(mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-15 * max(1.0, hi):
                    break
            lam_min = hi

        hi = max(1.0, 2.0 * lam_min)
        while self._psi_any(hi) <= q:
            hi *= 2.0
            if hi > 1e12:
                raise RootFindingError(
                    f"phi: bracket expansion failed, q={q}, hi={hi}, "
                    f"psi(hi)={self._psi_any(hi)}"
                )
        lo = lam_min
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self._psi_any(mid) < q:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-14 * max(1.0, hi):
                break
        else:
            raise RootFindingError(
                f"phi: bisection did not converge, bracket=[{lo}, {hi}], q={q}"
            )
        root = 0.5 * (lo + hi)
        for _ in range(4):
            slope = self.psi_derivative(root)
            if slope <= 0.0:
                break
            step = (self._psi_any(root) - q) / slope
            root -= step
            if abs(step) < 1e-16 * max(1.0, root):
                break
        return float(max(root, 0.0))

    # ------------------------------------------------------------------
    # Qualitative behaviour and measure changes
    # ------------------------------------------------------------------

    def drift_regime(self) -> DriftRegime:
        """Long-run behaviour determined by the sign of ``psi'(0+)``."""
        slope = self.psi_prime_at_zero()
        if slope > 0.0:
            return DriftRegime.DRIFTS_TO_PLUS_INFINITY
        if slope < 0.0:
            return DriftRegime.DRIFTS_TO_MINUS_INFINITY
        return DriftRegime.OSCILLATES

    def has_unbounded_variation(self) -> bool:
        """True iff the Gaussian part is nonzero (always, by construction)."""
        return self.sigma != 0.0

    def esscher_tilt(self, c: float) -> "LevyModel":
        """Exponentially tilted model with exponent ``psi(. + c) - psi(c)``.

        The tilt stays inside the family: the drift becomes
        ``mu + c*sigma^2`` and, for the jump family, the jump intensity and
        mean become ``jump_rate*eta/(eta+c)`` and ``1/(eta+c)``.
        """
        if c < 0.0:
            raise ValueError("esscher_tilt requires c >= 0")
        if c == 0.0:
            return self
        mu = self.mu + c * self.sigma**2
        if self.family is Family.BROWNIAN_DRIFT:
            return LevyModel(Family.BROWNIAN_DRIFT, mu, self.sigma)
        eta = self.eta
        return LevyModel(
            Family.EXP_JUMP_DIFFUSION,
            mu,
            self.sigma,
            jump_rate=self.jump_rate * eta / (eta + c),
            jump_mean=1.0 / (eta + c),
        )

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        out = {"family": self.family.value, "mu": self.mu, "sigma": self.sigma}
        if self.family is Family.EXP_JUMP_DIFFUSION:
            out["jump_rate"] = self.jump_rate
            out["jump_mean"] = self.jump_mean
        return out

    @staticmethod
    def from_dict(data: dict) -> "LevyModel":
        family = Family(data["family"])
        if family is Family.BROWNIAN_DRIFT:
            return LevyModel(family, float(data["mu"]), float(data["sigma"]))
        return LevyModel(
            family,
            float(data["mu"]),
            float(data["sigma"]),
            jump_rate=float(data.get("jump_rate", 0.0)),
            jump_mean=float(data.get("jump_mean", 1.0)),
        )


def make_brownian(mu: float, sigma: float) -> LevyModel:
    """Brownian motion with drift: ``psi(lam) = mu*lam + sigma^2*lam^2/2``."""
    return LevyModel(Family.BROWNIAN_DRIFT, float(mu), float(sigma))


def make_exp_jump_diffusion(
    mu: float, sigma: float, rate: float, jump_mean: float
) -> LevyModel:
    """Diffusion plus downward exponential jumps.

    ``psi(lam) = mu*lam + sigma^2*lam^2/2 - rate*lam/(eta + lam)`` with
    ``eta = 1/jump_mean``.
    """
    return LevyModel(
        Family.EXP_JUMP_DIFFUSION,
        float(mu),
        float(sigma),
        jump_rate=float(rate),
        jump_mean=float(jump_mean),
    )
