"""The five estimators of alpha(u) = P(S(u) > u).

Each estimator consumes one replication worth of randomness and returns one
unbiased sample of alpha(u):

* ``cmc``  - crude Monte Carlo indicator.
* ``ak``   - the classical conditional estimator for i.i.d. risks (applied to
  non-identical marginals through a random-permutation symmetrization, which
  is unbiased for independent risks and heuristic otherwise; flagged).
* ``mak``  - stratified conditional estimator: condition on all normal
  coordinates except the one driving the selected risk, and integrate the
  remaining one-dimensional Gaussian over the event
  {sum exceeds u} & {selected risk is the maximum}.
* ``zr``   - condition on the sphere direction and integrate the radius over
  the exceedance set.
* ``rn``   - like ``zr`` but stratified, conditioned on the maximum, with an
  importance-sampled driver sphere component.

The conditional cores are pure functions of the drawn coordinates, exposed
separately (``*_values``) so tests can drive them with hand-picked inputs.
Block engines vectorize replications; every block of ``randsrc.BLOCK_SIZE``
replications always generates its full draw layout, so results are identical
however a run is chunked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import randsrc, tails
from .errors import (NumericalAbortError, ThresholdTooExtremeError,
                     ValidationError)
from .linalg import FactorizationSet, factorize_all
from .model import ModelSpec
from .rootfind import exceedance_bounds
from .tails import log_is_density, log_sphere_density, normal_cdf, normal_tail

_THETA_CLAMP = 1.0 - 1e-15
_REDRAW_ATTEMPTS = 8
KNOWN_ESTIMATORS = ("cmc", "ak", "mak", "zr", "rn")


@dataclass(frozen=True)
class EstimatorKind:
    """An estimator name plus its options (``a`` is the f_IS weight exponent,
    used by ``rn`` only; the reference choice is a large constant, 10)."""

    name: str
    a: float = 10.0

    def __post_init__(self):
        if self.name not in KNOWN_ESTIMATORS:
            raise ValidationError(
                f"unknown estimator {self.name!r}; valid names: "
                f"{', '.join(KNOWN_ESTIMATORS)}")
        if self.a <= 0:
            raise ValidationError("estimator parameter a must be positive")

    @classmethod
    def parse(cls, spec) -> "EstimatorKind":
        if isinstance(spec, EstimatorKind):
            return spec
        if isinstance(spec, dict):
            name = str(spec.get("name", "")).lower()
            return cls(name=name, a=float(spec.get("a", 10.0)))
        text = str(spec).strip().lower()
        if "(" in text:
            name, _, rest = text.partition("(")
            rest = rest.rstrip(")")
            kv = dict(part.split("=") for part in rest.split(",") if "=" in part)
            return cls(name=name.strip(), a=float(kv.get("a", 10.0)))
        return cls(name=text)

    def label(self) -> str:
        if self.name == "rn":
            return f"RN(a={self.a:g})"
        return self.name.upper()


class BlockResult(NamedTuple):
    values: np.ndarray
    root_failures: int
    clamped: int


class _Prep(NamedTuple):
    a_col: np.ndarray      # driver column of A^(j), (d,)
    a_rest: np.ndarray     # remaining columns, (d, d-1)
    mak_slopes: np.ndarray  # bg_i * a_col_i, (d,)
    e2_coeff: np.ndarray   # bg_j - bg_i * a_col_i, (d,)
    dlog: np.ndarray       # log(lam_i) - log(lam_j), (d,)


@dataclass(frozen=True)
class ReplicationContext:
    """Everything a replication needs that depends only on (model, u).

    Immutable and shared read-only across workers; streams stay outside.
    ``is_b`` carries the per-stratum f_IS shape parameters for ``is_a``.
    """

    model: ModelSpec
    u: float
    factors: FactorizationSet
    strat_weights: np.ndarray
    strat_total: float
    is_a: float
    is_b: np.ndarray
    prep: tuple[_Prep, ...]

    @property
    def d(self) -> int:
        return self.model.d


def _prep(ctx: ReplicationContext, j: int) -> _Prep:
    return ctx.prep[j]


def make_context(model: ModelSpec, u: float, is_a: float = 10.0) -> ReplicationContext:
    """Precompute factorizations, stratification weights and IS tuning.

    Underflowed marginal tails are kept as zeros here; the stratified
    estimators raise when they actually need the weights.
    """
    if u < 0:
        raise ValidationError("threshold u must be nonnegative")
    factors = factorize_all(model.sigma)
    weights = tails.marginal_tails(model, u, check=False)
    total = float(weights.sum())
    is_b = tails.is_tuning_b_vector(model, u, is_a) if u > 0 else \
        np.full(model.d, max(0.75 * (model.d - 1), 0.05))
    loglam = np.log(model.lam)
    prep = tuple(
        _Prep(
            a_col=factors.factors[k][:, 0],
            a_rest=factors.factors[k][:, 1:],
            mak_slopes=model.bg * factors.factors[k][:, 0],
            e2_coeff=model.bg[k] - model.bg * factors.factors[k][:, 0],
            dlog=loglam - loglam[k],
        )
        for k in range(model.d)
    )
    return ReplicationContext(model=model, u=u, factors=factors,
                              strat_weights=weights, strat_total=total,
                              is_a=float(is_a), is_b=is_b, prep=prep)


# ---------------------------------------------------------------------------
# interval measures
# ---------------------------------------------------------------------------

def _normal_measure(lo, hi):
    """P(lo <= N < hi), using the numerically favorable tail difference."""
    upper = normal_tail(lo) - normal_tail(hi)
    lower = normal_cdf(hi) - normal_cdf(lo)
    with np.errstate(invalid="ignore"):      # -inf + inf rows take either branch
        out = np.where(lo + hi > 0.0, upper, lower)
    return np.where(hi > lo, np.maximum(out, 0.0), 0.0)


def _measure_exceedance(psi_lo, psi_hi, w_lo, w_hi, measure) -> np.ndarray:
    """Measure of ((-inf, psi_lo) u (psi_hi, inf)) intersected with [w_lo, w_hi)."""
    whole = psi_lo >= psi_hi
    left = measure(w_lo, np.minimum(psi_lo, w_hi))
    right = measure(np.maximum(psi_hi, w_lo), w_hi)
    return np.where(whole, measure(w_lo, w_hi), left + right)


def _max_window(e2_coeff, rhs, j, d):
    """Intersection over i != j of the half-lines {t * g_i >= rhs_i}."""
    g = np.broadcast_to(e2_coeff, rhs.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = rhs / g
    noti = np.arange(d)[None, :] != j
    lo = np.max(np.where(noti & (g > 0), bound, -np.inf), axis=1)
    hi = np.min(np.where(noti & (g < 0), bound, np.inf), axis=1)
    dead = np.any(noti & (g == 0) & (rhs > 0), axis=1)
    return lo, hi, dead


# ---------------------------------------------------------------------------
# conditional value cores (pure functions of the drawn coordinates)
# ---------------------------------------------------------------------------

def mak_conditional_values(ctx: ReplicationContext, j: int,
                           rest: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial max-sum probability estimates Z_j given the non-driver normals.

    ``rest``: (m, d-1) standard normals for the coordinates other than the
    driver of risk j.  Returns (values, converged): the standard-normal
    measure, in the driver coordinate, of {sum > u} & {X_j is the maximum}.
    """
    if not ctx.model.radial.is_gaussian:
        raise ValidationError(
            "the conditional normal estimator requires the Gaussian radial law")
    m = ctx.model
    p = _prep(ctx, j)
    rest = np.atleast_2d(np.asarray(rest, dtype=float))
    if rest.shape[1] != ctx.d - 1:
        raise ValidationError(f"rest must have {ctx.d - 1} columns")
    c = rest @ p.a_rest.T                        # (mb, d) conditional offsets
    logk = np.log(m.lam)[None, :] + m.bg[None, :] * c
    slopes = np.broadcast_to(p.mak_slopes, logk.shape)
    log_level = -np.inf if ctx.u <= 0 else np.log(ctx.u)
    psi_lo, psi_hi, ok = exceedance_bounds(logk, slopes, log_level)
    rhs = p.dlog[None, :] + m.bg[None, :] * c
    w_lo, w_hi, dead = _max_window(p.e2_coeff, rhs, j, ctx.d)
    vals = _measure_exceedance(psi_lo, psi_hi, w_lo, w_hi, _normal_measure)
    vals = np.where(dead | (w_lo >= w_hi), 0.0, vals)
    return vals, ok


def _radial_measure(ctx):
    tail = ctx.model.radial.tail

    def measure(lo, hi):
        lo = np.maximum(lo, 0.0)
        out = tail(lo) - tail(np.maximum(hi, 0.0))
        return np.where(hi > lo, np.maximum(out, 0.0), 0.0)

    return measure


def rn_conditional_values(ctx: ReplicationContext, j: int, theta_j: np.ndarray,
                          rest: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted conditional estimates given the driver sphere component.

    ``theta_j``: (m,) importance-sampled driver components in (-1, 1);
    ``rest``: (m, d-1) unit vectors (the conditional direction of the other
    sphere coordinates).  Returns (values, converged) where values already
    carry the importance weight f(theta)/f_IS(a, b_j, theta).
    """
    m = ctx.model
    p = _prep(ctx, j)
    theta_j = np.atleast_1d(np.asarray(theta_j, dtype=float))
    rest = np.atleast_2d(np.asarray(rest, dtype=float))
    u_sphere = randsrc.assemble_sphere_with_driver(theta_j, rest)
    theta = u_sphere @ ctx.factors.factors[j].T          # (mb, d), theta[:, j] == theta_j
    logw = (log_sphere_density(ctx.d, theta_j)
            - log_is_density(ctx.is_a, float(ctx.is_b[j]), theta_j))
    slopes = m.bg[None, :] * theta
    logk = np.broadcast_to(np.log(m.lam), slopes.shape)
    log_level = -np.inf if ctx.u <= 0 else np.log(ctx.u)
    psi_lo, psi_hi, ok = exceedance_bounds(logk, slopes, log_level)
    e2 = m.bg[j] * theta_j[:, None] - m.bg[None, :] * theta
    rhs = np.broadcast_to(p.dlog, e2.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = rhs / e2
    noti = np.arange(ctx.d)[None, :] != j
    w_lo = np.max(np.where(noti & (e2 > 0), bound, -np.inf), axis=1)
    w_hi = np.min(np.where(noti & (e2 < 0), bound, np.inf), axis=1)
    dead = np.any(noti & (e2 == 0) & (rhs > 0), axis=1)
    w_lo = np.maximum(w_lo, 0.0)                          # radius domain
    vals = _measure_exceedance(psi_lo, psi_hi, w_lo, w_hi, _radial_measure(ctx))
    vals = np.where(dead | (w_lo >= w_hi), 0.0, vals)
    return np.exp(logw) * vals, ok


def zr_values(ctx: ReplicationContext,
              theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Radial exceedance probability given the correlated direction theta.

    ``theta``: (m, d) rows A @ U for sphere-uniform U.  The value is
    P(R < psi_lo) 1{psi_lo > 0} + P(R > psi_hi), i.e. the radial measure of
    the exceedance set restricted to the nonnegative half-line.
    """
    m = ctx.model
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    slopes = m.bg[None, :] * theta
    logk = np.broadcast_to(np.log(m.lam), slopes.shape)
    log_level = -np.inf if ctx.u <= 0 else np.log(ctx.u)
    psi_lo, psi_hi, ok = exceedance_bounds(logk, slopes, log_level)
    mcount = theta.shape[0]
    vals = _measure_exceedance(psi_lo, psi_hi, np.zeros(mcount),
                               np.full(mcount, np.inf), _radial_measure(ctx))
    return vals, ok


def cmc_values(ctx: ReplicationContext, normals: np.ndarray) -> np.ndarray:
    """Indicator of S(u) > u from standard-normal draws (Gaussian radial)."""
    m = ctx.model
    y = normals @ ctx.factors.factors[0].T
    with np.errstate(over="ignore"):
        s = np.sum(m.lam * np.exp(m.bg * y), axis=1)
    return (s > ctx.u).astype(float)


def cmc_values_elliptical(ctx: ReplicationContext, radii: np.ndarray,
                          sphere: np.ndarray) -> np.ndarray:
    """Indicator of S(u) > u from (R, U) draws (any radial law)."""
    m = ctx.model
    y = (radii[:, None] * sphere) @ ctx.factors.factors[0].T
    with np.errstate(over="ignore"):
        s = np.sum(m.lam * np.exp(m.bg * y), axis=1)
    return (s > ctx.u).astype(float)


def _marginal_tail_at(ctx: ReplicationContext, k, x: np.ndarray) -> np.ndarray:
    """F-bar_k(x) for risk k evaluated at arbitrary positive levels x."""
    m = ctx.model
    lam = m.lam[k]
    bg = m.bg[k]
    if m.radial.is_gaussian:
        return normal_tail((np.log(x) - np.log(lam)) / bg)
    return np.array([
        tails.marginal_tail_single(float(xi_), float(l), float(b), m.radial,
                                   d=ctx.d, check=False)
        for xi_, l, b in np.broadcast(x, lam, bg)
    ])


def ak_values(ctx: ReplicationContext, normals: np.ndarray,
              cond: np.ndarray | None = None) -> np.ndarray:
    """Classical conditional estimator values from normal draws.

    ``cond`` holds the conditioning index per row; None means the classical
    fixed last index (identical marginals).  The value is
    d * F-bar_cond(max(u + X_cond - S, max over the other X_i)).
    """
    m = ctx.model
    y = normals @ ctx.factors.factors[0].T
    with np.errstate(over="ignore"):
        x = m.lam * np.exp(m.bg * y)
    s = np.sum(x, axis=1)
    n_rows = x.shape[0]
    if cond is None:
        cond = np.full(n_rows, ctx.d - 1, dtype=np.intp)
    rows = np.arange(n_rows)
    x_cond = x[rows, cond]
    if ctx.d > 1:
        masked = np.where(np.arange(ctx.d)[None, :] == cond[:, None], -np.inf, x)
        other_max = np.max(masked, axis=1)
    else:
        other_max = np.zeros(n_rows)
    arg = np.maximum(ctx.u + x_cond - s, other_max)
    arg = np.maximum(arg, np.finfo(float).tiny)     # argument is positive a.s.
    return ctx.d * _marginal_tail_at(ctx, cond, arg)


# ---------------------------------------------------------------------------
# block engines
# ---------------------------------------------------------------------------

def _identical_marginals(m: ModelSpec) -> bool:
    return bool(np.all(m.lam == m.lam[0]) and np.all(m.beta == m.beta[0]))


def _stratified_engine(ctx, core, force_j):
    """Shared stratify / group / redraw loop for the mak and rn engines.

    ``core(gen, j, rows_count) -> (values, ok)`` draws the conditional
    randomness for one stratum and evaluates it.
    """
    z = ctx.strat_weights
    ztot = ctx.strat_total
    if not np.isfinite(ztot) or ztot <= 0.0:
        raise ThresholdTooExtremeError(
            f"all marginal tails underflowed at u={ctx.u:g}: stratification "
            f"weights are zero, threshold too extreme")

    def engine(gen: np.random.Generator, mb: int) -> BlockResult:
        if force_j is None:
            idx = randsrc.stratified_indices(gen, mb, z)
        else:
            idx = np.full(mb, force_j, dtype=np.intp)
        values = np.zeros(mb)
        failures = 0
        for j in range(ctx.d):
            rows = np.where(idx == j)[0]
            if rows.size == 0:
                continue
            vals, ok = core(gen, j, rows.size)
            for _ in range(_REDRAW_ATTEMPTS):
                if ok.all():
                    break
                bad = np.where(~ok)[0]
                failures += bad.size
                redraw, ok_new = core(gen, j, bad.size)
                vals[bad] = redraw
                ok[bad] = ok_new
            if not ok.all():
                raise NumericalAbortError(
                    f"root solver kept failing in stratum {j} after "
                    f"{_REDRAW_ATTEMPTS} redraws")
            if force_j is None:
                values[rows] = ztot * vals / z[j]
            else:
                values[rows] = vals            # raw partial estimator
        return BlockResult(values, failures, 0)

    return engine


def make_engine(ctx: ReplicationContext, kind: EstimatorKind,
                force_j: int | None = None
                ) -> Callable[[np.random.Generator, int], BlockResult]:
    """Build the vectorized per-block sampler for one estimator.

    The returned callable maps (generator, block_rows) to the replication
    values for those rows; its draw layout is fixed by (estimator, model, u)
    so replication k sees the same randomness regardless of chunking.
    ``force_j`` pins the stratification index (mak/rn only) and switches the
    output to the raw per-stratum estimator.
    """
    d = ctx.d
    kname = kind.name

    if kname == "cmc":
        if ctx.model.radial.is_gaussian:
            def engine(gen, mb):
                return BlockResult(cmc_values(ctx, gen.standard_normal((mb, d))), 0, 0)
        else:
            def engine(gen, mb):
                q = np.clip(gen.random(mb), 2.0 ** -53, 1.0 - 2.0 ** -53)
                radii = np.array([ctx.model.radial.quantile(v) for v in q])
                return BlockResult(
                    cmc_values_elliptical(ctx, radii, randsrc.sphere_matrix(gen, mb, d)),
                    0, 0)
        return engine

    if kname == "ak":
        symmetrize = not _identical_marginals(ctx.model)

        def engine(gen, mb):
            normals = gen.standard_normal((mb, d))
            cond = gen.integers(0, d, size=mb) if symmetrize else None
            return BlockResult(ak_values(ctx, normals, cond), 0, 0)

        return engine

    if kname == "mak":
        def core(gen, j, count):
            return mak_conditional_values(ctx, j, gen.standard_normal((count, d - 1)))

        return _stratified_engine(ctx, core, force_j)

    if kname == "zr":
        def engine(gen, mb):
            u_sphere = randsrc.sphere_matrix(gen, mb, d)
            vals, ok = zr_values(ctx, u_sphere @ ctx.factors.factors[0].T)
            failures = 0
            for _ in range(_REDRAW_ATTEMPTS):
                if ok.all():
                    break
                bad = np.where(~ok)[0]
                failures += bad.size
                redo = randsrc.sphere_matrix(gen, bad.size, d)
                vals[bad], ok[bad] = zr_values(ctx, redo @ ctx.factors.factors[0].T)
            if not ok.all():
                raise NumericalAbortError("root solver kept failing in zr")
            return BlockResult(vals, failures, 0)

        return engine

    if kname == "rn":
        if d == 1:
            # no sphere component to reweight: the conditional probability is
            # the marginal tail itself, with zero variance (and the
            # stratification scale ztot/z_1 cancels)
            z1 = float(ctx.strat_weights[0])

            def engine(gen, mb):
                return BlockResult(np.full(mb, z1), 0, 0)

            return engine
        clamp_box = [0]

        def core(gen, j, count):
            theta_j = randsrc.beta_symmetric(gen, kind.a, float(ctx.is_b[j]), count)
            clipped = np.abs(theta_j) >= _THETA_CLAMP
            clamp_box[0] += int(clipped.sum())
            theta_j = np.clip(theta_j, -_THETA_CLAMP, _THETA_CLAMP)
            rest = randsrc.sphere_matrix(gen, count, d - 1)
            return rn_conditional_values(ctx, j, theta_j, rest)

        base = _stratified_engine(ctx, core, force_j)

        def engine(gen, mb):
            res = base(gen, mb)
            clamps, clamp_box[0] = clamp_box[0], 0
            return BlockResult(res.values, res.root_failures, clamps)

        return engine

    raise ValidationError(f"unknown estimator kind {kname!r}")


# ---------------------------------------------------------------------------
# single-replication operations
# ---------------------------------------------------------------------------

def _single(engine, r: randsrc.RngStream) -> float:
    return float(engine(r.generator(), 1).values[0])


def cmc(ctx: ReplicationContext, r: randsrc.RngStream) -> float:
    """One crude Monte Carlo replication: the indicator of S(u) > u."""
    return _single(make_engine(ctx, EstimatorKind("cmc")), r)


def ak_classic(ctx: ReplicationContext, r: randsrc.RngStream) -> float:
    """One classical conditional replication (symmetrized if non-identical)."""
    return _single(make_engine(ctx, EstimatorKind("ak")), r)


def mak_partial(ctx: ReplicationContext, j: int, r: randsrc.RngStream) -> float:
    """One conditional partial estimate Z_j (stratum pinned to j, unscaled)."""
    return _single(make_engine(ctx, EstimatorKind("mak"), force_j=j), r)


def mak(ctx: ReplicationContext, r: randsrc.RngStream) -> float:
    """One stratified conditional replication of alpha(u)."""
    return _single(make_engine(ctx, EstimatorKind("mak")), r)


def zr_original(ctx: ReplicationContext, r: randsrc.RngStream) -> float:
    """One radial conditional replication (no stratification, no weighting)."""
    return _single(make_engine(ctx, EstimatorKind("zr")), r)


def rn_partial(ctx: ReplicationContext, j: int, a: float,
               r: randsrc.RngStream) -> float:
    """One weighted conditional partial estimate for stratum j (unscaled)."""
    if a != ctx.is_a:
        ctx = make_context(ctx.model, ctx.u, is_a=a)
    return _single(make_engine(ctx, EstimatorKind("rn", a=a), force_j=j), r)


def rn(ctx: ReplicationContext, a: float, r: randsrc.RngStream) -> float:
    """One stratified importance-sampled replication of alpha(u)."""
    if a != ctx.is_a:
        ctx = make_context(ctx.model, ctx.u, is_a=a)
    return _single(make_engine(ctx, EstimatorKind("rn", a=a)), r)
