"""Continuous-measurement schemes for a single qubit.

Four detection families are provided, each defined by the Kraus operator
attached to one readout value r:

* ``two_outcome``   -- discrete partial projection, r in {-1, +1}.
* ``dispersive``    -- Gaussian z readout, M(r) is diagonal with Gaussian
                       weights centered at r = +-1 and variance tau/dt.
* ``homodyne``      -- one quadrature of spontaneous emission, real r.
* ``heterodyne``    -- both quadratures, complex r (in-phase minus i times
                       the out-of-phase component).

Every Kraus operator carries its scalar prefactor (the Gaussian weight in
r) inside a log scale, so products over many steps stay inside double
range.  The time-reversed operator of a step is the matrix adjugate of
the forward one; for the diagonal families this coincides with flipping
the sign of the readout.

Readout sampling is exact.  All continuous readout densities here are of
the quadratic-Gaussian form exp(-r^2) * (alpha + beta r + gamma r^2), up
to affine changes of variable, so the cumulative distribution is known in
closed form through erf and can be inverted by safeguarded Newton
iteration to machine precision.  The heterodyne plane is sampled as the
in-phase marginal followed by the conditional quadrature, both of which
stay inside the same density family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erf, ndtri

from .errors import NumericError, SingularOperatorError
from .qmath import LogScaledMatrix, PureQubitState, adjugate

__all__ = [
    "SchemeKind",
    "MeasurementScheme",
    "two_outcome",
    "dispersive",
    "homodyne",
    "heterodyne",
    "GaussianPolyDensity",
    "kraus_forward",
    "kraus_backward",
    "kraus_det_log",
    "rabi_unitary",
    "readout_pdf",
    "readout_log_pdf",
    "sample_readout",
]

_LOG_PI = math.log(math.pi)
_TINY = np.finfo(float).tiny


class SchemeKind(str, Enum):
    TWO_OUTCOME = "two_outcome"
    DISPERSIVE = "dispersive"
    HOMODYNE = "homodyne"
    HETERODYNE = "heterodyne"


# uniform variates consumed per sampled readout, fixed per family so that
# per-trajectory streams are reproducible regardless of batching
DRAWS_PER_STEP = {
    SchemeKind.TWO_OUTCOME: 1,
    SchemeKind.DISPERSIVE: 2,
    SchemeKind.HOMODYNE: 1,
    SchemeKind.HETERODYNE: 2,
}


@dataclass(frozen=True)
class MeasurementScheme:
    """Detection family plus its strength, step length and optional drive.

    Parameters
    ----------
    kind : SchemeKind
        Which detection family.
    dt : float
        Duration of one measurement step.
    k : float, optional
        Two-outcome strength, 0 <= k <= 1/2 (1/2 is non-informative).
    tau : float, optional
        Dispersive characteristic time (readout variance is tau/dt).
    gamma : float, optional
        Fluorescence rate for homodyne/heterodyne; the per-step jump
        weight is eps = gamma * dt and must stay below 1.
    omega : float
        Rabi drive about sigma_y, applied after each measurement step.
    """

    kind: SchemeKind
    dt: float
    k: float | None = None
    tau: float | None = None
    gamma: float | None = None
    omega: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not math.isfinite(self.omega):
            raise ValueError("omega must be finite")
        if self.kind is SchemeKind.TWO_OUTCOME:
            if self.k is None or not (0.0 <= self.k <= 0.5):
                raise ValueError(f"two-outcome strength k must lie in [0, 1/2], got {self.k}")
        elif self.kind is SchemeKind.DISPERSIVE:
            if self.tau is None or not (math.isfinite(self.tau) and self.tau > 0):
                raise ValueError(f"dispersive scheme needs tau > 0, got {self.tau}")
        else:
            if self.gamma is None or self.gamma < 0:
                raise ValueError(f"fluorescence scheme needs gamma >= 0, got {self.gamma}")
            if not self.gamma * self.dt < 1.0:
                raise ValueError(
                    f"eps = gamma*dt = {self.gamma * self.dt} must be below 1"
                )

    @property
    def eps(self) -> float:
        """Per-step jump weight gamma*dt of the fluorescence families."""
        if self.kind not in (SchemeKind.HOMODYNE, SchemeKind.HETERODYNE):
            raise ValueError(f"eps is undefined for {self.kind.value}")
        return self.gamma * self.dt


def two_outcome(k: float, dt: float = 1.0, omega: float = 0.0) -> MeasurementScheme:
    return MeasurementScheme(SchemeKind.TWO_OUTCOME, dt=dt, k=k, omega=omega)


def dispersive(tau: float, dt: float | None = None, omega: float = 0.0) -> MeasurementScheme:
    # default step resolves the characteristic time by a factor 100
    if dt is None:
        dt = tau / 100.0
    return MeasurementScheme(SchemeKind.DISPERSIVE, dt=dt, tau=tau, omega=omega)


def homodyne(gamma: float, dt: float | None = None, omega: float = 0.0) -> MeasurementScheme:
    if dt is None:
        dt = 1.0 / (100.0 * gamma)
    return MeasurementScheme(SchemeKind.HOMODYNE, dt=dt, gamma=gamma, omega=omega)


def heterodyne(gamma: float, dt: float | None = None, omega: float = 0.0) -> MeasurementScheme:
    if dt is None:
        dt = 1.0 / (100.0 * gamma)
    return MeasurementScheme(SchemeKind.HETERODYNE, dt=dt, gamma=gamma, omega=omega)


# ---------------------------------------------------------------------------
# quadratic-Gaussian readout densities


@dataclass(frozen=True)
class GaussianPolyDensity:
    """Density proportional to exp(-r^2) * (alpha + beta*r + gamma*r^2).

    Parameters may be scalars or broadcastable arrays (one density per
    element).  The polynomial must be nonnegative on the whole line,
    which holds for every physical readout distribution produced here.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        a, b, g = (np.asarray(v, dtype=float) for v in (self.alpha, self.beta, self.gamma))
        if np.any(a < 0) or np.any(g < 0):
            raise ValueError("alpha and gamma must be nonnegative")
        # nonnegativity of the quadratic: beta^2 <= 4*alpha*gamma (+ rounding slack)
        slack = 1e-12 * (a + g + 1.0)
        if np.any(b * b > 4.0 * a * g + slack):
            raise ValueError("polynomial part takes negative values")
        norm = np.sqrt(math.pi) * (a + 0.5 * g)
        if np.any(norm <= 0):
            raise ValueError("density has zero mass")

    def _norm(self):
        return np.sqrt(math.pi) * (np.asarray(self.alpha, float) + 0.5 * np.asarray(self.gamma, float))

    def pdf(self, r):
        r = np.asarray(r, dtype=float)
        poly = self.alpha + self.beta * r + self.gamma * r * r
        return np.exp(-r * r) * np.maximum(poly, 0.0) / self._norm()

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        gauss = 0.5 * math.sqrt(math.pi) * (self.alpha + 0.5 * self.gamma) * (1.0 + erf(t))
        tail = -0.5 * np.exp(-t * t) * (self.beta + self.gamma * t)
        return np.clip((gauss + tail) / self._norm(), 0.0, 1.0)

    def ppf(self, u):
        """Invert the cdf elementwise by bracketed Newton iteration."""
        u = np.clip(np.asarray(u, dtype=float), _TINY, np.nextafter(1.0, 0.0))
        # the exp(-r^2) core has sigma = 1/sqrt(2); its quantile seeds Newton
        x = ndtri(u) / math.sqrt(2.0)
        lo = x - 1.0
        hi = x + 1.0
        step = 1.0
        for _ in range(64):
            too_high = self.cdf(lo) > u
            too_low = self.cdf(hi) < u
            if not (np.any(too_high) or np.any(too_low)):
                break
            step *= 2.0
            lo = np.where(too_high, lo - step, lo)
            hi = np.where(too_low, hi + step, hi)
        else:
            raise NumericError("could not bracket readout quantile")

        x = np.clip(x, lo, hi)
        for _ in range(200):
            fx = self.cdf(x) - u
            below = fx < 0
            lo = np.where(below, x, lo)
            hi = np.where(below | (fx == 0), hi, x)
            slope = self.pdf(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = x - fx / slope
            fallback = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
            x_next = np.where(fallback, 0.5 * (lo + hi), newton)
            done = np.abs(x_next - x) <= 1e-14 * (1.0 + np.abs(x_next))
            x = x_next
            if np.all(done):
                return x
        raise NumericError("readout quantile iteration did not converge")


def _homodyne_coeffs(eps, pe, pg, bx):
    alpha = (1.0 - 0.5 * eps) * pe + pg
    beta = math.sqrt(eps) * bx
    gamma = eps * pe
    return alpha, beta, gamma


def _heterodyne_marginal_coeffs(eps, pe, pg, bx):
    # in-phase marginal of the two-quadrature density
    alpha = (1.0 - eps) * pe + pg + 0.5 * eps * pe
    beta = math.sqrt(eps) * bx
    gamma = eps * pe
    return alpha, beta, gamma


def _heterodyne_conditional_coeffs(eps, pe, pg, bx, by, ii):
    # out-of-phase quadrature conditioned on the sampled in-phase value
    alpha = (1.0 - eps) * pe + pg + eps * ii * ii * pe + math.sqrt(eps) * ii * bx
    beta = math.sqrt(eps) * by
    gamma = eps * pe
    return alpha, beta, gamma


# ---------------------------------------------------------------------------
# Kraus operators


def _entries(scheme: MeasurementScheme, r):
    """Kraus matrix entries and log prefactor for readout(s) r.

    Returns (m00, m01, m10, m11, log_scale); structurally zero entries
    come back as plain 0.0 scalars.  The matrix part is normalized so its
    largest entry magnitude is 1.
    """
    kind = scheme.kind
    if kind is SchemeKind.TWO_OUTCOME:
        r = np.asarray(r, dtype=float)
        k = scheme.k
        m00 = np.where(r > 0, math.sqrt(1.0 - k), math.sqrt(k))
        m11 = np.where(r > 0, math.sqrt(k), math.sqrt(1.0 - k))
        return m00, 0.0, 0.0, m11, np.zeros_like(m00)
    if kind is SchemeKind.DISPERSIVE:
        r = np.asarray(r, dtype=float)
        quarter = scheme.dt / (4.0 * scheme.tau)
        e_up = -quarter * (r - 1.0) ** 2
        e_dn = -quarter * (r + 1.0) ** 2
        peak = np.maximum(e_up, e_dn)
        ls = 0.25 * math.log(scheme.dt / (2.0 * math.pi * scheme.tau)) + peak
        return np.exp(e_up - peak), 0.0, 0.0, np.exp(e_dn - peak), ls
    if kind is SchemeKind.HOMODYNE:
        r = np.asarray(r, dtype=float)
        eps = scheme.eps
        ls = -0.5 * r * r - 0.25 * _LOG_PI
        m10 = math.sqrt(eps) * r
        peak = np.maximum(1.0, np.abs(m10))
        ls = ls + np.log(peak)
        return math.sqrt(1.0 - 0.5 * eps) / peak, 0.0, m10 / peak, 1.0 / peak, ls
    if kind is SchemeKind.HETERODYNE:
        r = np.asarray(r, dtype=complex)
        eps = scheme.eps
        rr = r.real * r.real + r.imag * r.imag
        ls = -0.5 * rr - 0.5 * _LOG_PI
        m10 = math.sqrt(eps) * np.conj(r)
        peak = np.maximum(1.0, np.abs(m10))
        ls = ls + np.log(peak)
        return math.sqrt(1.0 - eps) / peak, 0.0, m10 / peak, 1.0 / peak, ls
    raise ValueError(f"unknown scheme kind {kind!r}")


def _check_readout(scheme: MeasurementScheme, r) -> complex | float:
    kind = scheme.kind
    if kind is SchemeKind.HETERODYNE:
        return complex(r)
    if isinstance(r, complex) and r.imag != 0:
        raise ValueError(f"{kind.value} readout must be real, got {r!r}")
    r = float(np.real(r))
    if kind is SchemeKind.TWO_OUTCOME and r not in (-1.0, 1.0):
        raise ValueError(f"two-outcome readout must be +-1, got {r!r}")
    return r


def kraus_forward(scheme: MeasurementScheme, r) -> LogScaledMatrix:
    """Forward Kraus operator M(r), prefactor carried in the log scale."""
    r = _check_readout(scheme, r)
    m00, m01, m10, m11, ls = _entries(scheme, r)
    mat = np.array(
        [[complex(m00), complex(m01)], [complex(m10), complex(m11)]], dtype=complex
    )
    return LogScaledMatrix.from_matrix(mat, float(ls))


def kraus_backward(scheme: MeasurementScheme, r) -> LogScaledMatrix:
    """Time-reversed Kraus operator: the adjugate of the forward one.

    Satisfies backward @ forward = det(forward) * identity.  For the
    diagonal readout families this equals the forward operator at -r.
    """
    fwd = kraus_forward(scheme, r)
    if fwd.mat[0, 0] * fwd.mat[1, 1] - fwd.mat[0, 1] * fwd.mat[1, 0] == 0:
        raise SingularOperatorError(
            f"forward operator for {scheme.kind.value} readout {r!r} is singular"
        )
    return LogScaledMatrix.from_matrix(adjugate(fwd.mat), fwd.log_scale)


def kraus_det_log(scheme: MeasurementScheme, r):
    """log |det M(r)| from the closed per-family form.

    Accumulating these per step is immune to the cancellation that can
    affect a determinant taken at the end of a long product.
    """
    kind = scheme.kind
    if kind is SchemeKind.TWO_OUTCOME:
        k = scheme.k
        val = -math.inf if k == 0.0 else 0.5 * math.log(k * (1.0 - k))
        r = np.asarray(r, dtype=float)
        return np.full_like(r, val)
    if kind is SchemeKind.DISPERSIVE:
        r = np.asarray(r, dtype=float)
        return 0.5 * math.log(scheme.dt / (2.0 * math.pi * scheme.tau)) - (
            scheme.dt / (2.0 * scheme.tau)
        ) * (r * r + 1.0)
    if kind is SchemeKind.HOMODYNE:
        r = np.asarray(r, dtype=float)
        return -r * r - 0.5 * _LOG_PI + 0.5 * math.log(1.0 - 0.5 * scheme.eps)
    if kind is SchemeKind.HETERODYNE:
        r = np.asarray(r, dtype=complex)
        rr = r.real * r.real + r.imag * r.imag
        return -rr - _LOG_PI + 0.5 * math.log(1.0 - scheme.eps)
    raise ValueError(f"unknown scheme kind {kind!r}")


def rabi_unitary(omega: float, dt: float) -> LogScaledMatrix:
    """Drive unitary exp(-i*omega*dt*sigma_y/2), a real rotation."""
    half = 0.5 * omega * dt
    c, s = math.cos(half), math.sin(half)
    return LogScaledMatrix.from_matrix(np.array([[c, -s], [s, c]], dtype=complex))


# ---------------------------------------------------------------------------
# readout statistics


def readout_log_pdf(scheme: MeasurementScheme, state: PureQubitState, r):
    """log of the readout density at r for the given pre-measurement state.

    For the two-outcome family this is the log probability mass.  Accepts
    an array of readout values and returns an array of the same shape.
    """
    bx, by, bz = state.bloch()
    pe = 0.5 * (1.0 + bz)
    pg = 0.5 * (1.0 - bz)
    kind = scheme.kind
    if kind is SchemeKind.TWO_OUTCOME:
        r = np.asarray(r, dtype=float)
        if not np.all(np.abs(r) == 1.0):
            raise ValueError("two-outcome readout must be +-1")
        with np.errstate(divide="ignore"):
            return np.log(0.5 * (1.0 + r * bz * (1.0 - 2.0 * scheme.k)))
    if kind is SchemeKind.DISPERSIVE:
        r = np.asarray(r, dtype=float)
        half = scheme.dt / (2.0 * scheme.tau)
        with np.errstate(divide="ignore"):
            branches = np.logaddexp(
                np.log(pe) - half * (r - 1.0) ** 2,
                np.log(pg) - half * (r + 1.0) ** 2,
            )
        return 0.5 * math.log(scheme.dt / (2.0 * math.pi * scheme.tau)) + branches
    if kind is SchemeKind.HOMODYNE:
        r = np.asarray(r, dtype=float)
        alpha, beta, gamma = _homodyne_coeffs(scheme.eps, pe, pg, bx)
        poly = alpha + beta * r + gamma * r * r
        with np.errstate(divide="ignore"):
            return -r * r - 0.5 * _LOG_PI + np.log(np.maximum(poly, 0.0))
    if kind is SchemeKind.HETERODYNE:
        r = np.asarray(r, dtype=complex)
        eps = scheme.eps
        ii, qq = r.real, -r.imag
        rr = ii * ii + qq * qq
        poly = (1.0 - eps) * pe + pg + eps * rr * pe + math.sqrt(eps) * (ii * bx + qq * by)
        with np.errstate(divide="ignore"):
            return -rr - _LOG_PI + np.log(np.maximum(poly, 0.0))
    raise ValueError(f"unknown scheme kind {kind!r}")


def readout_pdf(scheme: MeasurementScheme, state: PureQubitState, r):
    """Readout density (or mass) Tr[M(r) rho M(r)^dag] at r."""
    return np.exp(readout_log_pdf(scheme, state, r))


def _sample_from_uniforms(scheme: MeasurementScheme, pe, pg, bx, by, u):
    """Map uniforms u of shape (n, draws) to exact readout samples."""
    kind = scheme.kind
    if kind is SchemeKind.TWO_OUTCOME:
        bz = pe - pg
        p_plus = 0.5 * (1.0 + bz * (1.0 - 2.0 * scheme.k))
        return np.where(u[:, 0] < p_plus, 1.0, -1.0)
    if kind is SchemeKind.DISPERSIVE:
        center = np.where(u[:, 0] < pe, 1.0, -1.0)
        sigma = math.sqrt(scheme.tau / scheme.dt)
        z = ndtri(np.clip(u[:, 1], _TINY, np.nextafter(1.0, 0.0)))
        return center + sigma * z
    if kind is SchemeKind.HOMODYNE:
        alpha, beta, gamma = _homodyne_coeffs(scheme.eps, pe, pg, bx)
        return GaussianPolyDensity(alpha, beta, gamma).ppf(u[:, 0])
    if kind is SchemeKind.HETERODYNE:
        eps = scheme.eps
        a_i, b_i, g_i = _heterodyne_marginal_coeffs(eps, pe, pg, bx)
        ii = GaussianPolyDensity(a_i, b_i, g_i).ppf(u[:, 0])
        a_q, b_q, g_q = _heterodyne_conditional_coeffs(eps, pe, pg, bx, by, ii)
        qq = GaussianPolyDensity(a_q, b_q, g_q).ppf(u[:, 1])
        return ii - 1j * qq
    raise ValueError(f"unknown scheme kind {kind!r}")


def sample_readout(scheme: MeasurementScheme, state: PureQubitState, rng: np.random.Generator):
    """Draw one readout exactly from the state's readout distribution."""
    bx, by, bz = state.bloch()
    pe = 0.5 * (1.0 + bz)
    pg = 0.5 * (1.0 - bz)
    u = rng.random(DRAWS_PER_STEP[scheme.kind]).reshape(1, -1)
    r = _sample_from_uniforms(scheme, pe, pg, bx, by, u)[0]
    if scheme.kind is SchemeKind.TWO_OUTCOME:
        return int(r)
    if scheme.kind is SchemeKind.HETERODYNE:
        return complex(r)
    return float(r)
