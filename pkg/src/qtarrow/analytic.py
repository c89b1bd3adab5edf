"""Closed-form reference values for arrow-of-time statistics.

Everything here is an explicit formula (or a deterministic quadrature of
one), independent of the trajectory engine.  The test suite holds the
Monte Carlo results against these; the CLI can tabulate any of them to
CSV.

Covered: the two-outcome single-step values and their exact averages,
the dispersive arrow as a function of the accumulated readout, the
distributions of lambda and q for undriven dispersive monitoring from
the equator, the single-step homodyne arrow and its density, the
flat-prior average of the unreachable weight, and the effective
single-step reduction of a homodyne record.

Numerical care: logaddexp keeps the dispersive arrow finite for large
accumulated readouts, and arctanh near 1 is evaluated through log1p.
The homodyne single-step arrow is computed from the determinant
identity q = 2*log a - log det E rather than a single-log shortcut;
only the former attains its advertised minimum 2*log(sqrt(1-eps/2)/2)
at r = -1/sqrt(eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite

from .errors import NumericError

__all__ = [
    "mu_two_outcome",
    "mean_q_two_outcome",
    "q_dispersive",
    "p_lambda_dispersive",
    "p_q_dispersive",
    "mu_dispersive_exact",
    "q_homodyne_single_step",
    "q_homodyne_min",
    "pdf_q_homodyne_single_step",
    "mean_mu_flat_z",
    "homodyne_effective_readout",
    "AnalyticCurve",
    "CURVES",
    "tabulate",
]


def _check_k(k: float, allow_zero: bool = True) -> float:
    k = float(k)
    if not 0.0 <= k <= 0.5:
        raise ValueError(f"k must lie in [0, 1/2], got {k}")
    if not allow_zero and k == 0.0:
        raise ValueError("k = 0 is projective and the average diverges")
    return k


def _check_z0(z0: float) -> float:
    z0 = float(z0)
    if abs(z0) > 1.0:
        raise ValueError(f"z0 must lie in [-1, 1], got {z0}")
    return z0


def mu_two_outcome(k: float, z0: float) -> float:
    """Unreachable weight of one two-outcome step from polar angle z0."""
    k = _check_k(k)
    z0 = _check_z0(z0)
    g = (1.0 - 2.0 * k) ** 2
    return g * (1.0 - z0 * z0) / (1.0 - g * z0 * z0)


def mean_q_two_outcome(k: float, z0: float) -> float:
    """Exact readout-averaged arrow of one two-outcome step."""
    k = _check_k(k, allow_zero=False)
    z0 = _check_z0(z0)
    out = 0.0
    for r in (1.0, -1.0):
        p = 0.5 * (1.0 + r * z0 * (1.0 - 2.0 * k))
        if p == 0.0:
            continue
        num = r + z0 - 2.0 * k * z0
        out += p * (math.log(num * num) - math.log(4.0 * k * (1.0 - k)))
    return out


def q_dispersive(total_readout, z0: float):
    """Dispersive arrow from the time-weighted accumulated readout.

    The whole undriven record enters only through
    R = (dt/tau) * sum(r_n); the arrow is 2*log[cosh R + z0 sinh R],
    evaluated through logaddexp so large R cannot overflow.
    """
    z0 = _check_z0(z0)
    big_r = np.asarray(total_readout, dtype=float)
    with np.errstate(divide="ignore"):
        up = big_r + math.log1p(z0) if z0 > -1.0 else np.full_like(big_r, -math.inf)
        dn = -big_r + math.log1p(-z0) if z0 < 1.0 else np.full_like(big_r, -math.inf)
    out = 2.0 * (np.logaddexp(up, dn) - math.log(2.0))
    return float(out) if np.isscalar(total_readout) else out


def _atanh_sqrt(lam):
    # arctanh(sqrt(lam)) through log1p, stable as lam -> 1
    s = np.sqrt(lam)
    return 0.5 * (np.log1p(s) - np.log1p(-s))


def p_lambda_dispersive(lam, t_over_tau: float):
    """Density of the unreachable weight lambda for undriven dispersive
    monitoring from the equator, duration T = t_over_tau * tau."""
    t = float(t_over_tau)
    if not t > 0:
        raise ValueError(f"t_over_tau must be positive, got {t}")
    lam_arr = np.asarray(lam, dtype=float)
    if np.any((lam_arr <= 0.0) | (lam_arr >= 1.0)):
        raise ValueError("lambda must lie strictly inside (0, 1)")
    a = _atanh_sqrt(lam_arr)
    out = (
        math.sqrt(1.0 / (2.0 * math.pi * t))
        * (1.0 - lam_arr) ** -1.5
        * lam_arr**-0.5
        * np.exp(-0.5 * t - a * a / (2.0 * t))
    )
    return float(out) if np.isscalar(lam) else out


def p_q_dispersive(q, t_over_tau: float):
    """Density of the arrow value for the same ensemble: the lambda
    density pushed through lambda = 1 - exp(-q); zero for q <= 0.

    Evaluated in log space with arctanh(sqrt(lambda)) rewritten as
    log1p(sqrt(lambda)) + q/2, so the far tail underflows to zero
    instead of losing the lambda -> 1 endpoint to rounding.
    """
    t = float(t_over_tau)
    if not t > 0:
        raise ValueError(f"t_over_tau must be positive, got {t}")
    q_arr = np.asarray(q, dtype=float)
    out = np.zeros_like(q_arr)
    pos = q_arr > 0.0
    if np.any(pos):
        qp = q_arr[pos]
        lam = -np.expm1(-qp)
        a = np.log1p(np.sqrt(lam)) + 0.5 * qp
        log_p = (
            -0.5 * math.log(2.0 * math.pi * t)
            - 0.5 * np.log(lam)
            + 0.5 * qp
            - 0.5 * t
            - a * a / (2.0 * t)
        )
        out[pos] = np.exp(log_p)
    return float(out) if np.isscalar(q) else out


def _sech2(u):
    # 4 e^{-2|u|} / (1 + e^{-2|u|})^2, no overflow for any u
    e = np.exp(-2.0 * np.abs(u))
    return 4.0 * e / (1.0 + e) ** 2


def mu_dispersive_exact(t_over_tau: float, tol: float = 1e-10) -> float:
    """Exact unreachable weight for undriven dispersive monitoring from
    the equator: 1 - E[sech^2 R] over the accumulated-readout law.

    R is an equal mixture of two Gaussians at +-T/tau with variance
    T/tau; sech^2 is even, so a single Gauss-Hermite sum suffices.
    """
    t = float(t_over_tau)
    if not t > 0:
        raise ValueError(f"t_over_tau must be positive, got {t}")

    def value(nodes):
        x, w = roots_hermite(nodes)
        return float(np.sum(w * _sech2(t + math.sqrt(2.0 * t) * x)) / math.sqrt(math.pi))

    nodes = 64
    last = value(nodes)
    while nodes < 2048:
        nodes *= 2
        cur = value(nodes)
        if abs(cur - last) <= tol * (1.0 + abs(cur)):
            return 1.0 - cur
        last = cur
    raise NumericError("dispersive exact quadrature did not settle")


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return eps


def q_homodyne_single_step(eps: float, r):
    """Arrow of one homodyne step from the +x state.

    q(r) = 2*log(1 - eps/4 + sqrt(eps) r + eps r^2 / 2) - log(1 - eps/2);
    the quadratic is positive for every real r when eps < 1.
    """
    eps = _check_eps(eps)
    r_arr = np.asarray(r, dtype=float)
    a = 1.0 - 0.25 * eps + math.sqrt(eps) * r_arr + 0.5 * eps * r_arr * r_arr
    out = 2.0 * np.log(a) - math.log1p(-0.5 * eps)
    return float(out) if np.isscalar(r) else out


def q_homodyne_min(eps: float) -> float:
    """Most negative single-step homodyne arrow, attained at r = -1/sqrt(eps)."""
    eps = _check_eps(eps)
    return math.log((2.0 - eps) / 8.0)


def pdf_q_homodyne_single_step(eps: float, q):
    """Density of the single-step homodyne arrow from the +x state.

    Each value above the minimum comes from the two readout branches
    r = -1/sqrt(eps) +- s of the quadratic; the density sums both,
    weighted by the readout law and the inverse slope.  Zero below the
    minimum, divergent (integrably) at it.
    """
    eps = _check_eps(eps)
    q_arr = np.asarray(q, dtype=float)
    out = np.zeros_like(q_arr)
    qmin = q_homodyne_min(eps)
    above = q_arr > qmin
    if np.any(above):
        qa = q_arr[above]
        a_of_q = np.exp(0.5 * (qa + math.log1p(-0.5 * eps)))
        a_min = 0.25 * (2.0 - eps)
        s = np.sqrt(2.0 * (a_of_q - a_min) / eps)
        r0 = -1.0 / math.sqrt(eps)
        rp, rm = r0 + s, r0 - s
        weight = np.exp(-rp * rp) + np.exp(-rm * rm)
        with np.errstate(divide="ignore"):
            out[above] = a_of_q * a_of_q * weight / (2.0 * eps * s * math.sqrt(math.pi))
    out[q_arr == qmin] = math.inf
    return float(out) if np.isscalar(q) else out


def mean_mu_flat_z(k: float) -> float:
    """Unreachable weight of one two-outcome step averaged over a flat
    initial z: 1 - 4k(1-k) arctanh(1-2k)/(1-2k), with the k -> 1/2
    limit taken by series."""
    k = _check_k(k)
    if k == 0.0:
        return 1.0
    x = 1.0 - 2.0 * k
    if x < 1.0e-4:
        # arctanh(x)/x = 1 + x^2/3 + x^4/5 + ...
        ratio = 1.0 + x * x / 3.0 + x**4 / 5.0
    else:
        ratio = math.atanh(x) / x
    return 1.0 - 4.0 * k * (1.0 - k) * ratio


def homodyne_effective_readout(record, eps: float) -> float:
    """Collapse a homodyne record onto one effective readout value.

    y = (1/sqrt(N)) * sum_n r_n (1 - eps/2)^{(n-1)/2} reproduces the
    accumulated operator's off-diagonal entry; together with the
    effective strength N*eps it reduces the whole record to a single
    step (good for eps << 1).  eps = 0 is allowed and gives the plain
    scaled sum.
    """
    eps = float(eps)
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    r = np.asarray(record, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("record must be a nonempty 1d array of readouts")
    n = r.size
    weights = np.power(1.0 - 0.5 * eps, 0.5 * np.arange(n))
    return float(np.sum(r * weights) / math.sqrt(n))


# ---------------------------------------------------------------------------
# tabulation


@dataclass(frozen=True)
class AnalyticCurve:
    """A formula evaluated on a grid, ready to write as CSV."""

    grid: np.ndarray
    values: np.ndarray
    tag: str

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {self.tag}\n")
            fh.write("x,value\n")
            for x, v in zip(self.grid, self.values):
                fh.write(f"{x:.17g},{v:.17g}\n")


def _curve_mu_two_outcome(grid, p):
    return np.array([mu_two_outcome(k, p["z0"]) for k in grid]), f"mu-two-outcome(z0={p['z0']:g})"


def _curve_mean_q_two_outcome(grid, p):
    return (
        np.array([mean_q_two_outcome(k, p["z0"]) for k in grid]),
        f"mean-q-two-outcome(z0={p['z0']:g})",
    )


def _curve_mean_mu_flat_z(grid, p):
    return np.array([mean_mu_flat_z(k) for k in grid]), "mean-mu-flat-z"


def _curve_q_dispersive(grid, p):
    return q_dispersive(np.asarray(grid, float), p["z0"]), f"q-dispersive(z0={p['z0']:g})"


def _curve_p_lambda(grid, p):
    return (
        p_lambda_dispersive(np.asarray(grid, float), p["t_over_tau"]),
        f"p-lambda-dispersive(t_over_tau={p['t_over_tau']:g})",
    )


def _curve_p_q(grid, p):
    return (
        p_q_dispersive(np.asarray(grid, float), p["t_over_tau"]),
        f"p-q-dispersive(t_over_tau={p['t_over_tau']:g})",
    )


def _curve_mu_dispersive_exact(grid, p):
    return np.array([mu_dispersive_exact(t) for t in grid]), "mu-dispersive-exact"


def _curve_q_homodyne_step(grid, p):
    return q_homodyne_single_step(p["eps"], np.asarray(grid, float)), f"q-homodyne-step(eps={p['eps']:g})"


def _curve_pdf_q_homodyne_step(grid, p):
    return (
        pdf_q_homodyne_single_step(p["eps"], np.asarray(grid, float)),
        f"pdf-q-homodyne-step(eps={p['eps']:g})",
    )


CURVES = {
    "mu-two-outcome": _curve_mu_two_outcome,
    "mean-q-two-outcome": _curve_mean_q_two_outcome,
    "mean-mu-flat-z": _curve_mean_mu_flat_z,
    "q-dispersive": _curve_q_dispersive,
    "p-lambda-dispersive": _curve_p_lambda,
    "p-q-dispersive": _curve_p_q,
    "mu-dispersive-exact": _curve_mu_dispersive_exact,
    "q-homodyne-step": _curve_q_homodyne_step,
    "pdf-q-homodyne-step": _curve_pdf_q_homodyne_step,
}


def tabulate(
    name: str,
    grid,
    z0: float = 0.0,
    t_over_tau: float = 1.0,
    eps: float = 0.5,
) -> AnalyticCurve:
    """Evaluate a named formula on a grid."""
    if name not in CURVES:
        known = ", ".join(sorted(CURVES))
        raise ValueError(f"unknown curve {name!r}; known: {known}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1d array")
    values, tag = CURVES[name](grid, {"z0": z0, "t_over_tau": t_over_tau, "eps": eps})
    return AnalyticCurve(grid=grid, values=np.asarray(values, dtype=float), tag=tag)
