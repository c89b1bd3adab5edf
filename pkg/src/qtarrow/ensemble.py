"""Trajectory ensembles, fluctuation-theorem estimates and histograms.

The sampler runs trajectories in vectorized blocks of fixed size.  Each
trajectory owns a PCG64 generator seeded by a splitmix64 hash of the
master seed and the trajectory index, and consumes a fixed number of
uniforms per step, so trajectory i is the same stream no matter how the
work is batched or how many worker processes run.  Ensemble statistics
are reduced with an explicit pairwise tree over the full per-trajectory
arrays.  Together this makes every ensemble quantity bit-identical
across repeat runs and across worker counts.

The estimate reported for an ensemble is

    meanExpNegQ  ~  <exp(-q)>      (should equal 1 - mu)
    muHat        ~  <lambda>       (estimates mu)
    consistency  ~  <exp(-q) + lambda>  (should equal 1 exactly in law)

together with the Jensen lower bound -log(1 - muHat) on <q>.  The
consistency combination has a per-trajectory identity value b/a (the
effect-matrix diagonal ratio), so its sample mean converging to 1 is a
sharper check than the two terms separately.

For single measurement steps the same quantities are also computed by
adaptive Gauss-Hermite quadrature over the readout, giving a
sampling-free reference that the Monte Carlo estimates are tested
against.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite

from .errors import ImpossibleRecordError, NumericError
from .qmath import PureQubitState
from .schemes import (
    DRAWS_PER_STEP,
    MeasurementScheme,
    SchemeKind,
    _entries,
    _sample_from_uniforms,
    kraus_det_log,
)

__all__ = [
    "EnsembleSamples",
    "FtEstimate",
    "Histogram",
    "UniformZInitial",
    "uniform_z_initial",
    "trajectory_seed",
    "sample_ensemble",
    "estimate_ft",
    "q_histogram",
    "mu_quadrature_single_step",
    "mean_exp_neg_q_quadrature_single_step",
]

_BLOCK = 4096  # trajectories per vectorized block, fixed for determinism
_STEP_CHUNK = 256  # steps of uniforms drawn per generator at a time
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def trajectory_seed(master_seed: int, index: int) -> int:
    """splitmix64 hash of (master_seed, trajectory index).

    Decouples nearby indices so each trajectory gets an independent
    PCG64 stream that depends only on the master seed and its own index.
    """
    x = (master_seed + (index + 1) * _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class UniformZInitial:
    """Initial-state sampler: z uniform on [-1, 1], on the x-z circle.

    Consumes one uniform from the trajectory's generator before the
    readout stream starts.
    """

    def __call__(self, gen: np.random.Generator) -> PureQubitState:
        z = -1.0 + 2.0 * gen.random()
        return PureQubitState.from_bloch(math.sqrt(max(0.0, 1.0 - z * z)), 0.0, z)


uniform_z_initial = UniformZInitial()


@dataclass(frozen=True)
class EnsembleSamples:
    """Per-trajectory arrow-of-time samples of one ensemble."""

    q: np.ndarray
    lam: np.ndarray
    exp_neg_q: np.ndarray
    scheme: MeasurementScheme
    n_steps: int
    seed: int

    @property
    def n_trajectories(self) -> int:
        return self.q.size


def _step_factor(cu, su, v00, v01, v10, v11, m00, m10, m11):
    """One step's operator V^dag (U M) V, entrywise.

    M is lower triangular for every family here; U is the real drive
    rotation; V maps the computational basis to {|x0>, |x0_perp>}.
    """
    um00 = cu * m00 - su * m10
    um01 = -su * m11
    um10 = su * m00 + cu * m10
    um11 = cu * m11
    g00 = um00 * v00 + um01 * v10
    g01 = um00 * v01 + um01 * v11
    g10 = um10 * v00 + um11 * v10
    g11 = um10 * v01 + um11 * v11
    f00 = np.conj(v00) * g00 + np.conj(v10) * g10
    f01 = np.conj(v00) * g01 + np.conj(v10) * g11
    f10 = np.conj(v01) * g00 + np.conj(v11) * g10
    f11 = np.conj(v01) * g01 + np.conj(v11) * g11
    return f00, f01, f10, f11


def _abs2(z):
    return z.real * z.real + z.imag * z.imag


def _run_block(scheme, x0, n_steps, master_seed, start, stop, initial_sampler):
    """Simulate trajectories [start, stop) in lockstep.

    Returns (q, lam, exp_neg_q) arrays.  Only aggregate per-trajectory
    quantities are kept; records and intermediate states are not stored.
    """
    n = stop - start
    draws = DRAWS_PER_STEP[scheme.kind]
    gens = [
        np.random.Generator(np.random.PCG64(trajectory_seed(master_seed, start + j)))
        for j in range(n)
    ]
    ae = np.empty(n, dtype=complex)
    ag = np.empty(n, dtype=complex)
    for j, gen in enumerate(gens):
        st = initial_sampler(gen) if initial_sampler is not None else x0
        ae[j], ag[j] = st.amp_e, st.amp_g

    # basis change to {|x0>, |x0_perp>}, fixed per trajectory
    v00, v10 = ae.copy(), ag.copy()
    v01, v11 = -np.conj(ag), np.conj(ae)

    half = 0.5 * scheme.omega * scheme.dt
    cu, su = math.cos(half), math.sin(half)

    p00 = np.ones(n, dtype=complex)
    p01 = np.zeros(n, dtype=complex)
    p10 = np.zeros(n, dtype=complex)
    p11 = np.ones(n, dtype=complex)
    pls = np.zeros(n)
    detl = np.zeros(n)

    for c0 in range(0, n_steps, _STEP_CHUNK):
        span = min(n_steps, c0 + _STEP_CHUNK) - c0
        u = np.stack([gen.random((span, draws)) for gen in gens])
        for s in range(span):
            pe = _abs2(ae)
            pg = _abs2(ag)
            w = np.conj(ae) * ag
            r = _sample_from_uniforms(scheme, pe, pg, 2.0 * w.real, 2.0 * w.imag, u[:, s, :])
            m00, _, m10, m11, mls = _entries(scheme, r)
            detl += kraus_det_log(scheme, r)

            ve = m00 * ae
            vg = m10 * ae + m11 * ag
            ae = cu * ve - su * vg
            ag = su * ve + cu * vg
            n2 = _abs2(ae) + _abs2(ag)
            if not np.all(n2 > 0.0):
                raise ImpossibleRecordError("sampled readout annihilated the state")
            inv = 1.0 / np.sqrt(n2)
            ae *= inv
            ag *= inv

            f00, f01, f10, f11 = _step_factor(cu, su, v00, v01, v10, v11, m00, m10, m11)
            q00 = f00 * p00 + f01 * p10
            q01 = f00 * p01 + f01 * p11
            q10 = f10 * p00 + f11 * p10
            q11 = f10 * p01 + f11 * p11
            peak = np.maximum(
                np.maximum(np.abs(q00), np.abs(q01)),
                np.maximum(np.abs(q10), np.abs(q11)),
            )
            inv = 1.0 / peak
            p00, p01, p10, p11 = q00 * inv, q01 * inv, q10 * inv, q11 * inv
            pls += mls + np.log(peak)

    a_hat = _abs2(p00) + _abs2(p10)
    if not np.all(a_hat > 0.0):
        raise ImpossibleRecordError("record acquired zero forward weight")
    c = np.conj(p00) * p01 + np.conj(p10) * p11
    log_a = 2.0 * pls + np.log(a_hat)
    q = 2.0 * log_a - 2.0 * detl
    lam = _abs2(c) / (a_hat * a_hat)
    with np.errstate(over="ignore"):
        eq = np.exp(-q)
    return q, lam, eq


def _block_worker(args):
    scheme, x0, n_steps, seed, start, stop, initial_sampler = args
    return start, _run_block(scheme, x0, n_steps, seed, start, stop, initial_sampler)


def sample_ensemble(
    scheme: MeasurementScheme,
    x0: PureQubitState | None,
    n_steps: int,
    n_trajectories: int,
    seed: int,
    workers: int = 1,
    initial_sampler=None,
) -> EnsembleSamples:
    """Sample an ensemble of trajectories and their arrow-of-time numbers.

    ``initial_sampler``, when given, draws each trajectory's initial
    state from its own generator (before any readout uniforms); pass
    ``uniform_z_initial`` for a flat mixture along z.  With ``workers``
    above one the fixed-size blocks are farmed out to forked processes;
    the result is bit-identical to a single-process run.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be at least 1")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if x0 is None and initial_sampler is None:
        raise ValueError("either x0 or initial_sampler is required")

    q = np.empty(n_trajectories)
    lam = np.empty(n_trajectories)
    eq = np.empty(n_trajectories)
    blocks = [
        (s, min(s + _BLOCK, n_trajectories)) for s in range(0, n_trajectories, _BLOCK)
    ]
    tasks = [(scheme, x0, n_steps, seed, s0, s1, initial_sampler) for s0, s1 in blocks]
    if workers > 1 and len(blocks) > 1:
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            ctx = multiprocessing.get_context()
        with ctx.Pool(min(workers, len(blocks))) as pool:
            for s0, (qb, lb, eb) in pool.imap_unordered(_block_worker, tasks):
                q[s0 : s0 + qb.size] = qb
                lam[s0 : s0 + qb.size] = lb
                eq[s0 : s0 + qb.size] = eb
    else:
        for s0, s1 in blocks:
            q[s0:s1], lam[s0:s1], eq[s0:s1] = _run_block(
                scheme, x0, n_steps, seed, s0, s1, initial_sampler
            )
    return EnsembleSamples(
        q=q, lam=lam, exp_neg_q=eq, scheme=scheme, n_steps=n_steps, seed=seed
    )


# ---------------------------------------------------------------------------
# estimates


def _pairwise_sum(x) -> float:
    """Sum by an adjacent-pairs tree: fixed order, so bit-reproducible."""
    x = np.asarray(x, dtype=float).ravel().copy()
    if x.size == 0:
        return 0.0
    while x.size > 1:
        half = x.size // 2
        head = x[: 2 * half].reshape(half, 2).sum(axis=1)
        x = head if x.size % 2 == 0 else np.concatenate([head, x[-1:]])
    return float(x[0])


def _mean_stderr(x) -> tuple[float, float]:
    n = x.size
    mean = _pairwise_sum(x) / n
    if n < 2 or not math.isfinite(mean):
        return mean, 0.0
    var = _pairwise_sum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class FtEstimate:
    """Ensemble fluctuation-theorem numbers with standard errors."""

    mean_exp_neg_q: float
    mean_exp_neg_q_stderr: float
    mu_hat: float
    mu_hat_stderr: float
    mean_q: float
    mean_q_stderr: float
    bound: float
    n_trajectories: int
    consistency: float
    consistency_stderr: float

    def to_json_dict(self) -> dict:
        return {
            "meanExpNegQ": self.mean_exp_neg_q,
            "meanExpNegQStderr": self.mean_exp_neg_q_stderr,
            "muHat": self.mu_hat,
            "muHatStderr": self.mu_hat_stderr,
            "meanQ": self.mean_q,
            "meanQStderr": self.mean_q_stderr,
            "bound": self.bound,
            "nTrajectories": self.n_trajectories,
            "consistency": self.consistency,
            "consistencyStderr": self.consistency_stderr,
        }


def estimate_ft(samples: EnsembleSamples) -> FtEstimate:
    """Reduce an ensemble to its fluctuation-theorem estimate.

    ``consistency`` is the mean of the per-trajectory sum
    exp(-q) + lambda, whose expectation is exactly 1; its stderr uses
    the paired samples and is therefore tighter than combining the two
    separate errors.
    """
    mean_eq, se_eq = _mean_stderr(samples.exp_neg_q)
    mu_hat, se_mu = _mean_stderr(samples.lam)
    mean_q, se_q = _mean_stderr(samples.q)
    cons, se_cons = _mean_stderr(samples.exp_neg_q + samples.lam)
    bound = math.inf if mu_hat >= 1.0 else -math.log1p(-mu_hat)
    return FtEstimate(
        mean_exp_neg_q=mean_eq,
        mean_exp_neg_q_stderr=se_eq,
        mu_hat=mu_hat,
        mu_hat_stderr=se_mu,
        mean_q=mean_q,
        mean_q_stderr=se_q,
        bound=bound,
        n_trajectories=samples.n_trajectories,
        consistency=cons,
        consistency_stderr=se_cons,
    )


# ---------------------------------------------------------------------------
# histograms


@dataclass(frozen=True)
class Histogram:
    """Density histogram: counts plus the edges that normalized them."""

    edges: np.ndarray
    counts: np.ndarray
    n_total: int

    @property
    def densities(self) -> np.ndarray:
        widths = np.diff(self.edges)
        return self.counts / (self.n_total * widths)

    def write_csv(self, path) -> None:
        dens = self.densities
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("left_edge,right_edge,density\n")
            for i in range(self.counts.size):
                fh.write(f"{self.edges[i]:.17g},{self.edges[i + 1]:.17g},{dens[i]:.17g}\n")


def q_histogram(values, bins: int = 60, lo: float | None = None, hi: float | None = None) -> Histogram:
    """Histogram of arrow-of-time values as a probability density.

    The default range pads the sample range by 1% on each side so edge
    samples do not sit exactly on a boundary.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot histogram an empty sample")
    if bins < 1:
        raise ValueError("bins must be at least 1")
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise ValueError("no finite values to histogram")
    if lo is None or hi is None:
        vmin, vmax = float(finite.min()), float(finite.max())
        pad = 0.01 * (vmax - vmin) if vmax > vmin else 0.5
        if lo is None:
            lo = vmin - pad
        if hi is None:
            hi = vmax + pad
    if not hi > lo:
        raise ValueError(f"histogram range [{lo}, {hi}] is empty")
    counts, edges = np.histogram(finite, bins=bins, range=(lo, hi))
    return Histogram(edges=edges, counts=counts, n_total=int(values.size))


# ---------------------------------------------------------------------------
# single-step quadrature references


def _single_step_log_parts(scheme, x0, r):
    """Per-readout (log a, lambda, log det E) for one measurement step."""
    m00, _, m10, m11, mls = _entries(scheme, r)
    half = 0.5 * scheme.omega * scheme.dt
    cu, su = math.cos(half), math.sin(half)
    v00, v10 = complex(x0.amp_e), complex(x0.amp_g)
    v01, v11 = -v10.conjugate(), v00.conjugate()
    m00 = np.asarray(m00, dtype=complex)
    m10 = np.asarray(m10, dtype=complex) * np.ones_like(m00)
    m11 = np.asarray(m11, dtype=complex)
    f00, f01, f10, f11 = _step_factor(cu, su, v00, v01, v10, v11, m00, m10, m11)
    a_hat = _abs2(f00) + _abs2(f10)
    c = np.conj(f00) * f01 + np.conj(f10) * f11
    with np.errstate(divide="ignore"):
        log_a = 2.0 * mls + np.log(a_hat)
    lam = _abs2(c) / (a_hat * a_hat)
    log_det_e = 2.0 * np.asarray(kraus_det_log(scheme, r), dtype=float)
    return log_a, lam, log_det_e


def _quadrature_single_step(scheme, x0, which, tol):
    """Adaptive Gauss-Hermite integral of lambda*P_F or detE/a over r."""

    def value(nodes):
        # extreme-node weights underflow to 0 for large grids; they drop
        # out through the log
        x, wts = roots_hermite(nodes)
        with np.errstate(divide="ignore"):
            log_wts = np.log(wts)
        if scheme.kind is SchemeKind.HETERODYNE:
            ii, qq = np.meshgrid(x, x, indexing="ij")
            r = (ii - 1j * qq).ravel()
            log_w = (log_wts[:, None] + log_wts[None, :]).ravel()
            jac = ii.ravel() ** 2 + qq.ravel() ** 2
        else:
            scale = math.sqrt(2.0 * scheme.tau / scheme.dt) if (
                scheme.kind is SchemeKind.DISPERSIVE
            ) else 1.0
            r = scale * x
            log_w = log_wts + math.log(scale)
            jac = x * x
        log_a, lam, log_det_e = _single_step_log_parts(scheme, x0, r)
        if which == "mu":
            with np.errstate(divide="ignore"):
                term = np.log(np.maximum(lam, 0.0)) + log_a
        else:
            term = log_det_e - log_a
        # jac restores the exp(-x^2) weight that hermgauss removed
        return float(np.sum(np.exp(term + jac + log_w)))

    if scheme.kind is SchemeKind.TWO_OUTCOME:
        out = 0.0
        for r in (1.0, -1.0):
            log_a, lam, log_det_e = _single_step_log_parts(scheme, x0, np.array([r]))
            if which == "mu":
                out += float(lam[0] * math.exp(log_a[0]))
            else:
                out += float(math.exp(log_det_e[0] - log_a[0]))
        return out

    nodes = 64
    last = value(nodes)
    # the strongest single steps (eps near 1) need the deepest rungs
    limit = 1024 if scheme.kind is SchemeKind.HETERODYNE else 2048
    while nodes < limit:
        nodes *= 2
        cur = value(nodes)
        if abs(cur - last) <= tol * (1.0 + abs(cur)):
            return cur
        last = cur
    raise NumericError(f"single-step quadrature did not settle within {limit} nodes")


def mu_quadrature_single_step(scheme: MeasurementScheme, x0: PureQubitState, tol: float = 1e-8) -> float:
    """Quadrature value of <lambda> for one step: the unreachable weight mu."""
    return _quadrature_single_step(scheme, x0, "mu", tol)


def mean_exp_neg_q_quadrature_single_step(
    scheme: MeasurementScheme, x0: PureQubitState, tol: float = 1e-8
) -> float:
    """Quadrature value of <exp(-q)> for one step; should equal 1 - mu."""
    return _quadrature_single_step(scheme, x0, "eq", tol)
