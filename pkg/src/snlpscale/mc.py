"""Monte Carlo engine for two-sided exit problems with supremum tracking.

Paths follow Euler steps with exact Gaussian increments; the jump family adds
downward exponential jumps at exact exponential event times, with diffusion
substeps between events and barrier checks at every substep.  With the bridge
correction enabled, each diffusion substep samples the conditional extrema of
the Brownian bridge between its endpoints::

    M = (X0 + X1 + sqrt((X1-X0)^2 - 2 sigma^2 dt ln U)) / 2   (maximum)
    m = (X0 + X1 - sqrt((X1-X0)^2 - 2 sigma^2 dt ln U')) / 2  (minimum)

which detects intra-step barrier crossings with the exact conditional
probability and keeps the running supremum free of the O(sqrt(dt)) discrete
maximum bias.  Path functionals accumulate by the trapezoid rule in time,
consistent with the first-order path discretization.

Paths are simulated in fixed-size chunks; chunk ``k`` draws from a
counter-derived Philox substream keyed by ``(seed, k)`` and the reduction
runs in fixed chunk order, so estimates are bit-identical for a given
configuration regardless of scheduling.  Antithetic mates rerun a chunk on
the same substream with negated Gaussian increments.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .generalized import ExitSpec, conditional_curve
from .models import Family, LevyModel
from .potentials import BivariatePotential, UnivariatePotential

__all__ = [
    "MCConfig",
    "Estimate",
    "ExitSamples",
    "ExitMCResult",
    "ConditionalBin",
    "ConditionalMCResult",
    "OccupationMCResult",
    "run_exit_mc",
    "conditional_mc",
    "occupation_mc",
]

_CHUNK = 1 << 17  # fixed partition; part of the reproducibility contract
_MAX_CENSORED_FRACTION = 1e-3


@dataclass
class MCConfig:
    """Path-engine configuration.

    ``t_cap`` defaults to ``1e4 (a-b)^2 / sigma^2``; paths that exhaust it
    are counted as censored, and a censored fraction above 0.1% fails the
    run.  ``antithetic`` pairs each path with a mate driven by negated
    Gaussian increments (pure-Gaussian family only).
    """

    dt: float
    n_paths: int
    seed: int = 0
    bridge_correction: bool = True
    t_cap: Optional[float] = None
    antithetic: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.n_paths < 100:
            raise ValueError("n_paths must be >= 100")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic pairing needs an even n_paths")

    def resolved_t_cap(self, model: LevyModel, spec: ExitSpec) -> float:
        if self.t_cap is not None:
            return self.t_cap
        return 1e4 * (spec.a - spec.b) ** 2 / model.sigma**2

    def warn_if_coarse(self, spec: ExitSpec) -> None:
        if self.dt > (spec.a - spec.b) ** 2 / 100.0:
            warnings.warn(
                f"dt={self.dt} is coarse for interval width {spec.a - spec.b}; "
                "recommended dt <= (a-b)^2/100",
                stacklevel=3,
            )


@dataclass
class Estimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    std_error: float
    n: int
    elapsed: float = 0.0


@dataclass
class ExitSamples:
    """Raw per-path exit records (censored paths excluded)."""

    exited_up: np.ndarray
    s_at_exit: np.ndarray
    x_pre: np.ndarray
    x_post: np.ndarray
    functional: np.ndarray

    def to_csv(self, target) -> None:
        own = isinstance(target, (str, bytes))
        fh = open(target, "w", encoding="utf-8") if own else target
        try:
            fh.write("path,exited_up,s_at_exit,x_pre,x_post,functional\n")
            for i in range(self.exited_up.size):
                fh.write(
                    f"{i},{int(self.exited_up[i])},{self.s_at_exit[i]:.17g},"
                    f"{self.x_pre[i]:.17g},{self.x_post[i]:.17g},"
                    f"{self.functional[i]:.17g}\n"
                )
        finally:
            if own:
                fh.close()


@dataclass
class ExitMCResult:
    up_laplace: Estimate
    down_value: Estimate
    p_up: Estimate
    n_censored: int
    samples: Optional[ExitSamples] = None


def _chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    key = np.array([seed % (1 << 64), chunk_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _as_weight(fn: Optional[Callable]) -> Callable[[np.ndarray], np.ndarray]:
    if fn is None:
        return lambda z: np.ones_like(np.asarray(z, dtype=float))

    def wrapped(z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(np.asarray(fn(z), dtype=float), z.shape)

    return wrapped


def _as_weight2(fn: Optional[Callable]) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if fn is None:
        return lambda u, v: np.ones_like(np.asarray(u, dtype=float))

    def wrapped(u, v):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(np.asarray(fn(u, np.asarray(v, dtype=float)), dtype=float), u.shape)

    return wrapped


# ---------------------------------------------------------------------------
# Core path loop
# ---------------------------------------------------------------------------


class _ExitState:
    """Terminal records of one simulated chunk."""

    __slots__ = ("up", "s_exit", "x_pre", "x_post", "acc", "censored")

    def __init__(self, n: int):
        self.up = np.zeros(n, dtype=bool)
        self.s_exit = np.full(n, np.nan)
        self.x_pre = np.full(n, np.nan)
        self.x_post = np.full(n, np.nan)
        self.acc = np.zeros(n)
        self.censored = np.zeros(n, dtype=bool)


def _simulate_exit_chunk(
    model: LevyModel,
    F: BivariatePotential,
    spec: ExitSpec,
    cfg: MCConfig,
    rng: np.random.Generator,
    n: int,
    xi_sign: float = 1.0,
) -> _ExitState:
    """Run ``n`` paths to exit or censoring."""
    b, x0, a = spec.b, spec.x, spec.a
    mu, sigma = model.mu, model.sigma
    rate = model.jump_rate if model.family is Family.EXP_JUMP_DIFFUSION else 0.0
    t_cap = cfg.resolved_t_cap(model, spec)
    bridge = cfg.bridge_correction

    out = _ExitState(n)
    x = np.full(n, x0)
    s = np.full(n, x0)
    t = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    jump_in = rng.exponential(1.0 / rate, n) if rate > 0.0 else np.full(n, np.inf)
    f_prev = F.eval_pairs(s, x)

    while True:
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        m = idx.size
        dt_eff = np.minimum(cfg.dt, jump_in[idx])
        at_jump = jump_in[idx] <= cfg.dt

        xi = xi_sign * rng.standard_normal(m)
        x_old = x[idx]
        s_old = s[idx]
        x_new = x_old + mu * dt_eff + sigma * np.sqrt(dt_eff) * xi

        if bridge:
            var = sigma * sigma * dt_eff
            gap2 = (x_new - x_old) ** 2
            u_hi = rng.random(m)
            u_lo = rng.random(m)
            m_hi = 0.5 * (x_old + x_new + np.sqrt(gap2 - 2.0 * var * np.log(u_hi)))
            m_lo = 0.5 * (x_old + x_new - np.sqrt(gap2 - 2.0 * var * np.log(u_lo)))
            up_hit = m_hi >= a
            dn_hit = ~up_hit & (m_lo <= b)
            s_new = np.minimum(np.maximum(s_old, m_hi), a)
        else:
            up_hit = x_new >= a
            dn_hit = x_new < b
            s_new = np.maximum(s_old, np.minimum(x_new, a))

        # trapezoid accumulation; bridge kills strictly inside the band get a
        # half step since the crossing time is interior to the step
        f_new = F.eval_pairs(s_new, x_new)
        d_acc = 0.5 * dt_eff * (f_prev[idx] + f_new)
        if bridge:
            interior = (up_hit | dn_hit) & (x_new < a) & (x_new >= b)
            d_acc = np.where(interior, 0.5 * d_acc, d_acc)
        out.acc[idx] += d_acc
        t[idx] += dt_eff

        if np.any(up_hit):
            hit = idx[up_hit]
            alive[hit] = False
            out.up[hit] = True
            out.s_exit[hit] = a
            end = np.full(hit.size, a) if bridge else x_new[up_hit]
            out.x_pre[hit] = end
            out.x_post[hit] = end
        if np.any(dn_hit):
            hit = idx[dn_hit]
            alive[hit] = False
            out.s_exit[hit] = s_new[dn_hit]
            end = np.full(hit.size, b) if bridge else x_new[dn_hit]
            out.x_pre[hit] = end
            out.x_post[hit] = end

        survive = ~(up_hit | dn_hit)
        sidx = idx[survive]
        x[sidx] = x_new[survive]
        s[sidx] = s_new[survive]
        f_prev[sidx] = f_new[survive]
        jump_in[sidx] -= dt_eff[survive]

        # jump events fire exactly at the end of their substep
        jmask = survive & at_jump
        if np.any(jmask):
            jidx = idx[jmask]
            sizes = rng.exponential(model.jump_mean, jidx.size)
            jump_in[jidx] = rng.exponential(1.0 / rate, jidx.size)
            x_jumped = x[jidx] - sizes
            below = x_jumped < b
            dn = jidx[below]
            if dn.size:
                alive[dn] = False
                out.s_exit[dn] = s[dn]
                out.x_pre[dn] = x[dn]
                out.x_post[dn] = x_jumped[below]
            keep = jidx[~below]
            x[keep] = x_jumped[~below]
            f_prev[keep] = F.eval_pairs(s[keep], x[keep])

        tired = alive & (t >= t_cap)
        if np.any(tired):
            alive[tired] = False
            out.censored[tired] = True
    return out


def _collect_states(model, F, spec, cfg) -> list:
    """Simulate all chunks, honoring the antithetic pairing.

    With pairing on, the list holds all primary chunks followed by their
    mates in the same order, so path ``i`` and path ``i + n/2`` of the
    concatenated arrays form a pair.
    """
    if cfg.antithetic and model.family is not Family.BROWNIAN_DRIFT:
        raise ValueError("antithetic pairing supports the Brownian family only")
    primaries = []
    mates = []
    remaining = cfg.n_paths // 2 if cfg.antithetic else cfg.n_paths
    chunk_index = 0
    while remaining > 0:
        n = min(_CHUNK, remaining)
        primaries.append(
            _simulate_exit_chunk(model, F, spec, cfg, _chunk_rng(cfg.seed, chunk_index), n)
        )
        if cfg.antithetic:
            mates.append(
                _simulate_exit_chunk(
                    model, F, spec, cfg, _chunk_rng(cfg.seed, chunk_index), n, xi_sign=-1.0
                )
            )
        remaining -= n
        chunk_index += 1
    return primaries + mates


def _estimate(values: np.ndarray, elapsed: float, antithetic: bool) -> Estimate:
    if antithetic:
        # mate pairs sit in the two halves of each chunk pair; fold them
        half = values.size // 2
        values = 0.5 * (values[:half] + values[half:])
    n = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return Estimate(mean=mean, std_error=se, n=n, elapsed=elapsed)


def run_exit_mc(
    model: LevyModel,
    F: BivariatePotential,
    spec: ExitSpec,
    cfg: MCConfig,
    g: Optional[Callable] = None,
    h: Optional[Callable] = None,
    keep_samples: bool = False,
) -> ExitMCResult:
    """Estimate the two-sided exit functionals by simulation.

    Returns estimates of (i) ``E[e^{-int F}; up]``, (ii)
    ``E[g(S_T) h(X_{T-}, X_T) e^{-int F}; down]`` and (iii) ``P(up)``,
    plus the raw exit records on request.

    Raises:
        RuntimeError: when more than 0.1% of the paths hit the time cap.
    """
    cfg.warn_if_coarse(spec)
    g_fn = _as_weight(g)
    h_fn = _as_weight2(h)
    start = time.perf_counter()
    states = _collect_states(model, F, spec, cfg)

    up = np.concatenate([st.up for st in states])
    s_exit = np.concatenate([st.s_exit for st in states])
    x_pre = np.concatenate([st.x_pre for st in states])
    x_post = np.concatenate([st.x_post for st in states])
    acc = np.concatenate([st.acc for st in states])
    censored = np.concatenate([st.censored for st in states])

    n_censored = int(censored.sum())
    if n_censored > _MAX_CENSORED_FRACTION * up.size:
        raise RuntimeError(
            f"{n_censored} of {up.size} paths were censored at the time cap "
            f"(fraction {n_censored / up.size:.2e} > {_MAX_CENSORED_FRACTION})"
        )
    counted = ~censored
    if cfg.antithetic and n_censored:
        raise RuntimeError("censoring breaks antithetic pair alignment; raise t_cap")

    lap = np.exp(-acc[counted])
    up_c = up[counted]
    y_up = np.where(up_c, lap, 0.0)
    down_weight = g_fn(s_exit[counted]) * h_fn(x_pre[counted], x_post[counted])
    y_down = np.where(~up_c, down_weight * lap, 0.0)
    elapsed = time.perf_counter() - start

    result = ExitMCResult(
        up_laplace=_estimate(y_up, elapsed, cfg.antithetic),
        down_value=_estimate(y_down, elapsed, cfg.antithetic),
        p_up=_estimate(up_c.astype(float), elapsed, cfg.antithetic),
        n_censored=n_censored,
    )
    if keep_samples:
        result.samples = ExitSamples(
            exited_up=up_c,
            s_at_exit=s_exit[counted],
            x_pre=x_pre[counted],
            x_post=x_post[counted],
            functional=acc[counted],
        )
    return result


# ---------------------------------------------------------------------------
# Conditional-on-supremum estimates
# ---------------------------------------------------------------------------


@dataclass
class ConditionalBin:
    lo: float
    hi: float
    midpoint: float
    n: int
    mc_mean: float
    mc_se: float
    deterministic: float
    empty: bool


@dataclass
class ConditionalMCResult:
    bins: list
    up_bin: ConditionalBin
    n_down: int
    n_up: int


def conditional_mc(
    model: LevyModel,
    F: BivariatePotential,
    spec: ExitSpec,
    cfg: MCConfig,
    n_bins: int,
) -> ConditionalMCResult:
    """Bin the down-exit Laplace samples by the supremum at the exit.

    Down-exit samples are binned by ``S_T`` over ``[x, a)``; the up-exit
    samples form the ``S_T = a`` atom bin.  Each bin is paired with the
    deterministic conditional value at its midpoint (one grid pass serves all
    midpoints).  Empty bins are flagged rather than dropped.
    """
    if n_bins < 4:
        raise ValueError("conditional_mc needs n_bins >= 4")
    res = run_exit_mc(model, F, spec, cfg, keep_samples=True)
    smp = res.samples
    edges = np.linspace(spec.x, spec.a, n_bins + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])

    # deterministic curve on a grid whose nodes contain the bin midpoints
    n_outer = 16 * n_bins + 1
    nodes, curve = conditional_curve(model, F, spec, n_outer=n_outer)
    mid_idx = np.round((mids - spec.x) / (nodes[1] - nodes[0])).astype(int)

    lap = np.exp(-smp.functional)
    down = ~smp.exited_up
    bins = []
    which = np.clip(
        np.searchsorted(edges, smp.s_at_exit[down], side="right") - 1, 0, n_bins - 1
    )
    vals_down = lap[down]
    for k in range(n_bins):
        sel = vals_down[which == k]
        empty = sel.size == 0
        bins.append(
            ConditionalBin(
                lo=float(edges[k]),
                hi=float(edges[k + 1]),
                midpoint=float(mids[k]),
                n=int(sel.size),
                mc_mean=float(sel.mean()) if not empty else float("nan"),
                mc_se=float(sel.std(ddof=1) / np.sqrt(sel.size)) if sel.size > 1 else float("nan"),
                deterministic=float(curve[mid_idx[k]]),
                empty=bool(empty),
            )
        )
    up_vals = lap[smp.exited_up]
    up_bin = ConditionalBin(
        lo=spec.a,
        hi=spec.a,
        midpoint=spec.a,
        n=int(up_vals.size),
        mc_mean=float(up_vals.mean()) if up_vals.size else float("nan"),
        mc_se=float(up_vals.std(ddof=1) / np.sqrt(up_vals.size)) if up_vals.size > 1 else float("nan"),
        deterministic=float(curve[-1]),
        empty=up_vals.size == 0,
    )
    return ConditionalMCResult(
        bins=bins, up_bin=up_bin, n_down=int(down.sum()), n_up=int(smp.exited_up.sum())
    )


# ---------------------------------------------------------------------------
# Occupation-density estimates
# ---------------------------------------------------------------------------


@dataclass
class OccupationMCResult:
    time_integral_laplace: Estimate
    occupation_laplace: Estimate
    mean_abs_discrepancy: float
    levels: np.ndarray
    density_profile: np.ndarray
    bandwidth: float


def occupation_mc(
    model: LevyModel,
    f_x: UnivariatePotential,
    spec: ExitSpec,
    cfg: MCConfig,
    n_levels: int,
) -> OccupationMCResult:
    """Cross-check the occupation formula by simulation.

    Per path computes (A) the trapezoidal time integral of ``f(X_t)`` and
    (B) the integral of ``f`` against the box-kernel occupation density with
    bandwidth ``2 sqrt(dt)``.  (B) integrates ``f`` exactly against each box
    through a fine cumulative table, so the A-B discrepancy carries only the
    smoothing error and shrinks like the bandwidth.  ``n_levels`` sets the
    resolution of the returned mean occupation-density profile.

    Raises:
        ValueError: if the bandwidth is unresolvable by the fine table.
    """
    if n_levels < 8:
        raise ValueError("occupation_mc needs n_levels >= 8")
    b, a = spec.b, spec.a
    w = 2.0 * np.sqrt(cfg.dt)
    fine_n = 4096
    fine = np.linspace(b - 2.0 * w, a + 2.0 * w, fine_n)
    if w <= (fine[1] - fine[0]):
        raise ValueError(
            f"bandwidth {w} is below the table resolution {(fine[1] - fine[0]):.3e}; "
            "increase dt or narrow the interval"
        )
    inside = (fine >= b) & (fine <= a)
    fvals = np.zeros(fine_n)
    fvals[inside] = f_x.eval_array(fine[inside])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (fvals[1:] + fvals[:-1]) * np.diff(fine))])

    def f_point(xs):
        return np.interp(xs, fine, fvals)

    def f_smoothed(xs):
        return (np.interp(xs + w, fine, cum) - np.interp(xs - w, fine, cum)) / (2.0 * w)

    levels = np.linspace(b, a, n_levels)
    density = np.zeros(n_levels)

    mu, sigma = model.mu, model.sigma
    rate = model.jump_rate if model.family is Family.EXP_JUMP_DIFFUSION else 0.0
    t_cap = cfg.resolved_t_cap(model, spec)
    bridge = cfg.bridge_correction
    start = time.perf_counter()

    acc_a_all = []
    acc_b_all = []
    remaining = cfg.n_paths
    chunk_index = 0
    while remaining > 0:
        n = min(_CHUNK, remaining)
        rng = _chunk_rng(cfg.seed, chunk_index)
        x = np.full(n, spec.x)
        t = np.zeros(n)
        alive = np.ones(n, dtype=bool)
        jump_in = rng.exponential(1.0 / rate, n) if rate > 0.0 else np.full(n, np.inf)
        acc_a = np.zeros(n)
        acc_b = np.zeros(n)
        fa_prev = f_point(x)
        fb_prev = f_smoothed(x)
        while True:
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            m = idx.size
            dt_eff = np.minimum(cfg.dt, jump_in[idx])
            at_jump = jump_in[idx] <= cfg.dt
            xi = rng.standard_normal(m)
            x_old = x[idx]
            x_new = x_old + mu * dt_eff + sigma * np.sqrt(dt_eff) * xi
            if bridge:
                var = sigma * sigma * dt_eff
                gap2 = (x_new - x_old) ** 2
                m_hi = 0.5 * (x_old + x_new + np.sqrt(gap2 - 2.0 * var * np.log(rng.random(m))))
                m_lo = 0.5 * (x_old + x_new - np.sqrt(gap2 - 2.0 * var * np.log(rng.random(m))))
                up_hit = m_hi >= a
                dn_hit = ~up_hit & (m_lo <= b)
            else:
                up_hit = x_new >= a
                dn_hit = x_new < b

            fa_new = f_point(x_new)
            fb_new = f_smoothed(x_new)
            d_a = 0.5 * dt_eff * (fa_prev[idx] + fa_new)
            d_b = 0.5 * dt_eff * (fb_prev[idx] + fb_new)
            if bridge:
                interior = (up_hit | dn_hit) & (x_new < a) & (x_new >= b)
                d_a = np.where(interior, 0.5 * d_a, d_a)
                d_b = np.where(interior, 0.5 * d_b, d_b)
            acc_a[idx] += d_a
            acc_b[idx] += d_b
            t[idx] += dt_eff

            # occupation-density profile: box-count the step midpoints
            x_mid = 0.5 * (x_old + x_new)
            hits = np.abs(x_mid[:, None] - levels[None, :]) < w
            density += (hits * dt_eff[:, None]).sum(axis=0) / (2.0 * w)

            gone = up_hit | dn_hit
            alive[idx[gone]] = False
            sidx = idx[~gone]
            x[sidx] = x_new[~gone]
            fa_prev[sidx] = fa_new[~gone]
            fb_prev[sidx] = fb_new[~gone]
            jump_in[sidx] -= dt_eff[~gone]

            jmask = ~gone & at_jump
            if np.any(jmask):
                jidx = idx[jmask]
                sizes = rng.exponential(model.jump_mean, jidx.size)
                jump_in[jidx] = rng.exponential(1.0 / rate, jidx.size)
                x_jumped = x[jidx] - sizes
                below = x_jumped < b
                alive[jidx[below]] = False
                keep = jidx[~below]
                x[keep] = x_jumped[~below]
                fa_prev[keep] = f_point(x[keep])
                fb_prev[keep] = f_smoothed(x[keep])

            tired = alive & (t >= t_cap)
            alive[tired] = False
        acc_a_all.append(acc_a)
        acc_b_all.append(acc_b)
        remaining -= n
        chunk_index += 1

    acc_a = np.concatenate(acc_a_all)
    acc_b = np.concatenate(acc_b_all)
    elapsed = time.perf_counter() - start
    return OccupationMCResult(
        time_integral_laplace=_estimate(np.exp(-acc_a), elapsed, False),
        occupation_laplace=_estimate(np.exp(-acc_b), elapsed, False),
        mean_abs_discrepancy=float(np.mean(np.abs(acc_a - acc_b))),
        levels=levels,
        density_profile=density / cfg.n_paths,
        bandwidth=w,
    )
