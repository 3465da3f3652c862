"""Exceedance sets of convex sums of exponentials.

The kernel solves, for batches of instances at once, where
``h(x) = sum_i c_i * exp(d_i * x)`` exceeds a level.  Convexity makes the
exceedance set the complement of one interval, so it is fully described by a
pair ``(psi_lo, psi_hi)``:

    {x : h(x) > level} = (-inf, psi_lo) u (psi_hi, +inf)

with ``psi_lo = -inf`` when the left component is empty, ``psi_hi = +inf``
when the right one is, and the convention ``psi_lo >= psi_hi`` (encoded as
``(+inf, -inf)``) when the whole line exceeds.

Everything is evaluated through log-sum-exp, never in linear space, so the
solver cannot overflow no matter how large the level or the coefficients;
the "rescale and retry" failure mode of a linear-space evaluation does not
arise.  Terms with zero slope are folded into the level before solving, which
keeps the remaining sum strictly monotone or strictly convex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import RootFindError, ValidationError

_X_RTOL = 1e-13          # relative stop on the Newton step
_F_ATOL = 1e-13          # absolute stop on log h(x) - log level
_MAX_ITER = 200


# ---------------------------------------------------------------------------
# log-sum-exp evaluations (batched; rows are instances)
# ---------------------------------------------------------------------------

def _lse(logc, s, t):
    z = logc + s * t[:, None]
    m = np.max(z, axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    return safe + np.log(np.sum(np.exp(z - safe[:, None]), axis=1))


def _lse_grad(logc, s, t):
    z = logc + s * t[:, None]
    m = np.max(z, axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    w = np.exp(z - safe[:, None])
    sw = np.sum(w, axis=1)
    val = safe + np.log(sw)
    grad = np.sum(w * s, axis=1) / sw
    return val, grad


def _lse_grad_curv(logc, s, t):
    z = logc + s * t[:, None]
    m = np.max(z, axis=1)
    w = np.exp(z - np.where(np.isfinite(m), m, 0.0)[:, None])
    w /= np.sum(w, axis=1)[:, None]
    g = np.sum(w * s, axis=1)
    curv = np.sum(w * s * s, axis=1) - g * g
    return g, curv


def _solve_level(logc, s, level, lo, hi, sign):
    """Root of lse(logc + s*t) = level inside the bracket [lo, hi].

    ``sign`` is the known orientation: +1 when the function increases through
    the root on this bracket, -1 when it decreases.  (Inferring it from the
    bracket endpoints is unsafe: a near-degenerate slope can make the
    endpoint residual indistinguishable from zero.)  Safeguarded Newton:
    steps leaving the current bracket fall back to bisection.  Returns
    (root, converged_mask).
    """
    t = 0.5 * (lo + hi)
    ok = np.zeros(t.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        val, grad = _lse_grad(logc, s, t)
        f = val - level
        active = ~ok
        shrink_lo = ((f * sign) < 0) & active
        lo = np.where(shrink_lo, t, lo)
        hi = np.where(active & ~shrink_lo, t, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - f / grad
        inner = np.minimum(lo, hi)
        outer = np.maximum(lo, hi)
        bad = ~np.isfinite(tn) | (tn <= inner) | (tn >= outer)
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        at_root = np.abs(f) <= _F_ATOL
        tn = np.where(at_root, t, tn)        # residual negligible: stay put
        ok |= active & (at_root | (np.abs(tn - t) <= _X_RTOL * (1.0 + np.abs(tn))))
        t = np.where(active, tn, t)          # converged rows freeze
        if np.all(ok):
            break
    return t, ok


def _march(logc, s, t0, direction, level, want_exceed):
    """March from t0 in ``direction`` (+-1), doubling the step, until
    lse - level is >= 0 (``want_exceed``) or < 0 (otherwise)."""
    t = t0.copy()
    step = np.ones_like(t)
    for _ in range(_MAX_ITER):
        f = _lse(logc, s, t) - level
        done = (f >= 0.0) == want_exceed
        if np.all(done):
            break
        t = np.where(done, t, t + direction * step)
        step = np.where(done, step, 2.0 * step)
    return t


def exceedance_bounds(logc: np.ndarray, slopes: np.ndarray, log_level):
    """Batched exceedance boundaries of convex exponential sums.

    Parameters
    ----------
    logc : (n, d) log-coefficients; ``-inf`` marks an absent term.
    slopes : (n, d) exponent slopes.
    log_level : scalar or (n,); ``-inf`` means a nonpositive level, which the
        positive sum always exceeds.

    Returns
    -------
    (psi_lo, psi_hi, ok) with the encoding described in the module docstring;
    ``ok`` is False on rows whose Newton iteration failed to converge.
    """
    logc = np.asarray(logc, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    n, _ = logc.shape
    level = np.broadcast_to(np.asarray(log_level, dtype=float), (n,)).astype(float).copy()

    psi_lo = np.full(n, -np.inf)
    psi_hi = np.full(n, np.inf)
    ok = np.ones(n, dtype=bool)

    present = np.isfinite(logc)
    whole = level == -np.inf

    # fold zero-slope terms into the level: h(x) > u  <=>  h_var(x) > u - c0
    zmask = present & (slopes == 0.0)
    if np.any(zmask):
        zc = np.where(zmask, logc, -np.inf)
        m0 = np.max(zc, axis=1)
        has0 = np.isfinite(m0)
        logc0 = np.where(
            has0,
            np.where(has0, m0, 0.0)
            + np.log(np.sum(np.exp(zc - np.where(has0, m0, 0.0)[:, None]), axis=1)),
            -np.inf)
        swallow = has0 & (logc0 >= level)
        whole |= swallow
        adj = has0 & ~swallow
        if np.any(adj):
            ratio = np.exp(logc0[adj] - level[adj])
            with np.errstate(divide="ignore"):
                level[adj] = level[adj] + np.log1p(-ratio)
            whole |= np.isneginf(level) & adj  # c0 ate the level to rounding

    act = present & (slopes != 0.0)
    lc = np.where(act, logc, -np.inf)
    has_pos = np.any(act & (slopes > 0.0), axis=1)
    has_neg = np.any(act & (slopes < 0.0), axis=1)

    psi_lo[whole] = np.inf
    psi_hi[whole] = -np.inf
    # rows with no variable term and constant below the level are empty:
    # the default (-inf, +inf) already encodes the empty set.

    def term_crossings(rows, want_positive):
        # t where an individual term alone reaches the level; a guaranteed
        # point of exceedance on the relevant side
        sel = act[rows] & ((slopes[rows] > 0.0) if want_positive else (slopes[rows] < 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            ti = (level[rows][:, None] - lc[rows]) / slopes[rows]
        ti = np.where(sel, ti, np.inf if want_positive else -np.inf)
        return np.min(ti, axis=1) if want_positive else np.max(ti, axis=1)

    # strictly increasing rows: single right boundary
    inc = has_pos & ~has_neg & ~whole
    if np.any(inc):
        rows = np.where(inc)[0]
        a, s, L = lc[rows], slopes[rows], level[rows]
        hi = term_crossings(rows, True)      # one term alone reaches the level
        lo = _march(a, s, hi - 1.0, -1.0, L, want_exceed=False)
        root, conv = _solve_level(a, s, L, lo, hi, sign=1.0)
        psi_hi[rows] = root
        ok[rows] &= conv

    # strictly decreasing rows: single left boundary (mirror image)
    dec = has_neg & ~has_pos & ~whole
    if np.any(dec):
        rows = np.where(dec)[0]
        a, s, L = lc[rows], -slopes[rows], level[rows]
        hi = -term_crossings(rows, False)
        lo = _march(a, s, hi - 1.0, -1.0, L, want_exceed=False)
        root, conv = _solve_level(a, s, L, lo, hi, sign=1.0)
        psi_lo[rows] = -root
        ok[rows] &= conv

    # mixed rows: minimize, then one root on each side when the minimum dips
    mix = has_pos & has_neg & ~whole
    if np.any(mix):
        rows = np.where(mix)[0]
        a, s, L = lc[rows], slopes[rows], level[rows]
        m = rows.size

        tlo = np.zeros(m)
        step = np.ones(m)
        for _ in range(_MAX_ITER):
            g, _ = _lse_grad_curv(a, s, tlo)
            need = g > 0.0
            if not np.any(need):
                break
            tlo = np.where(need, tlo - step, tlo)
            step = np.where(need, 2.0 * step, step)
        thi = np.zeros(m)
        step = np.ones(m)
        for _ in range(_MAX_ITER):
            g, _ = _lse_grad_curv(a, s, thi)
            need = g < 0.0
            if not np.any(need):
                break
            thi = np.where(need, thi + step, thi)
            step = np.where(need, 2.0 * step, step)

        t = 0.5 * (tlo + thi)
        conv_min = np.zeros(m, dtype=bool)
        for _ in range(_MAX_ITER):
            g, curv = _lse_grad_curv(a, s, t)
            active = ~conv_min
            move_lo = (g < 0.0) & active
            tlo = np.where(move_lo, t, tlo)
            thi = np.where(active & ~move_lo, t, thi)
            with np.errstate(divide="ignore", invalid="ignore"):
                tn = t - g / curv
            bad = ~np.isfinite(tn) | (tn <= tlo) | (tn >= thi)
            tn = np.where(bad, 0.5 * (tlo + thi), tn)
            conv_min |= active & (np.abs(tn - t) <= _X_RTOL * (1.0 + np.abs(tn)))
            t = np.where(active, tn, t)      # converged rows freeze
            if np.all(conv_min):
                break
        ok[rows] &= conv_min

        fmin = _lse(a, s, t) - L
        above = fmin >= 0.0
        if np.any(above):
            # minimum at or over the level: the whole line exceeds (up to a
            # single tangency point of measure zero)
            psi_lo[rows[above]] = np.inf
            psi_hi[rows[above]] = -np.inf
        below = ~above
        if np.any(below):
            r2 = rows[below]
            a2, s2, L2, tmin = a[below], s[below], L[below], t[below]
            # right root: a positive-slope term crossing gives f >= 0, but only
            # if it lands right of the minimizer; otherwise march outward
            tc = term_crossings(r2, True)
            hi_r = np.where(tc > tmin, tc, tmin + 1.0)
            hi_r = _march(a2, s2, hi_r, 1.0, L2, want_exceed=True)
            root, conv = _solve_level(a2, s2, L2, tmin, hi_r, sign=1.0)
            psi_hi[r2] = root
            ok[r2] &= conv
            tc = term_crossings(r2, False)
            lo_l = np.where(tc < tmin, tc, tmin - 1.0)
            lo_l = _march(a2, s2, lo_l, -1.0, L2, want_exceed=True)
            root, conv = _solve_level(a2, s2, L2, lo_l, tmin, sign=-1.0)
            psi_lo[r2] = root
            ok[r2] &= conv
    return psi_lo, psi_hi, ok


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpSum:
    """h(x) = sum_i coeffs_i * exp(slopes_i * x) with positive coefficients."""

    coeffs: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        s = np.atleast_1d(np.asarray(self.slopes, dtype=float))
        if c.shape != s.shape or c.ndim != 1 or c.size == 0:
            raise ValidationError("coeffs and slopes must be equal-length 1-d arrays")
        if np.any(c <= 0.0) or not np.all(np.isfinite(c)) or not np.all(np.isfinite(s)):
            raise ValidationError("ExpSum needs finite slopes and positive finite coefficients")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "slopes", s)

    def log_value(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return _lse(np.log(self.coeffs)[None, :].repeat(x.size, axis=0),
                    self.slopes[None, :].repeat(x.size, axis=0), x)

    def value(self, x):
        out = np.exp(self.log_value(x))
        return float(out[0]) if np.isscalar(x) else out


class PsiBounds(NamedTuple):
    """Boundaries of the exceedance set over the whole real line.

    ``lower``: right endpoint of the left-unbounded component (None if none).
    ``upper``: left endpoint of the right-unbounded component (None if none).
    ``whole_line``: the sum exceeds the level everywhere.
    """

    lower: float | None
    upper: float | None
    whole_line: bool


@dataclass(frozen=True)
class IntervalSet:
    """Union of at most two disjoint half-open intervals [lo, hi)."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals if a < b)
        if len(iv) > 2:
            raise ValidationError("exceedance sets have at most two components")
        for (a0, b0), (a1, b1) in zip(iv, iv[1:]):
            if b0 > a1:
                raise ValidationError("intervals must be disjoint and sorted")
        object.__setattr__(self, "intervals", iv)

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(())

    def contains(self, x: float) -> bool:
        return any(a <= x < b for a, b in self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals


def _solve_scalar(h: ExpSum, level: float):
    if level is None or not np.isfinite(level) or level <= 0.0:
        raise ValidationError("level must be a positive finite real")
    logc = np.log(h.coeffs)[None, :]
    s = h.slopes[None, :]
    lo, hi, ok = exceedance_bounds(logc, s, np.log(level))
    if not ok[0]:
        raise RootFindError(
            f"exceedance solve did not converge (level={level:g}, "
            f"slopes={h.slopes}, coeffs={h.coeffs})")
    return float(lo[0]), float(hi[0])


def psi_bounds(h: ExpSum, level: float) -> PsiBounds:
    """Lower/upper solutions of h(x) = level bounding the exceedance set."""
    lo, hi = _solve_scalar(h, level)
    if lo >= hi:
        return PsiBounds(lower=None, upper=None, whole_line=True)
    return PsiBounds(lower=None if lo == -np.inf else lo,
                     upper=None if hi == np.inf else hi,
                     whole_line=False)


def exceedance_set(h: ExpSum, level: float, domain: str = "real") -> IntervalSet:
    """{x in domain : h(x) > level} for domain "real" or "nonneg"."""
    if domain not in ("real", "nonneg"):
        raise ValidationError(f"domain must be 'real' or 'nonneg', got {domain!r}")
    lo, hi = _solve_scalar(h, level)
    left_edge = 0.0 if domain == "nonneg" else -np.inf
    if lo >= hi:
        return IntervalSet(((left_edge, np.inf),))
    pieces = []
    if lo > left_edge:
        pieces.append((left_edge, lo))
    pieces.append((max(hi, left_edge), np.inf))
    return IntervalSet(tuple(p for p in pieces if p[0] < p[1]))
