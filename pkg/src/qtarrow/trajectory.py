"""Single measurement trajectories and their arrow-of-time statistics.

A forward trajectory applies, per step, the sampled Kraus operator and
then the drive unitary.  Alongside the state it accumulates the
accumulated-operator product in the basis {|x0>, |x0_perp>} of the
initial state, from which everything else follows:

* the effect matrix E = M^dag M of the whole record, whose (0,0) entry
  a = <x0|E|x0> is the forward probability density of the record;
* the arrow-of-time measure q = 2*log a - log det E, the log-ratio of
  forward and time-reversed readout densities;
* lambda = |<x0_perp|E|x0>|^2 / a^2, whose ensemble mean is the weight
  mu of records the reversed dynamics can never generate.

log det E is accumulated per step from the closed per-family form of
|det M(r)| rather than taken from the final matrix: the final product is
nearly rank-1 for strong measurements and its determinant would suffer
catastrophic cancellation there.

The backward replay applies the inverse drive followed by the adjugate
Kraus operator, walking the recorded states in reverse, and returns the
total log-density of the reversed readout sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ImpossibleRecordError, SingularOperatorError
from .qmath import LogScaledMatrix, PureQubitState
from .schemes import (
    DRAWS_PER_STEP,
    MeasurementScheme,
    SchemeKind,
    _sample_from_uniforms,
    kraus_backward,
    kraus_det_log,
    kraus_forward,
    rabi_unitary,
)

__all__ = [
    "Trajectory",
    "ArrowOfTimeSample",
    "forward_step",
    "simulate_forward",
    "trajectory_from_record",
    "arrow_of_time",
    "backward_replay",
    "q_two_outcome",
    "write_trajectory_csv",
]

# densities below exp(_LOG_FLOOR) mark a record the state cannot produce
_LOG_FLOOR = math.log(1e-300)

TRAJECTORY_CSV_HEADER = "step,r_re,r_im,x,y,z,logPF"


@dataclass(frozen=True)
class Trajectory:
    """One measurement record together with its accumulated quantities.

    ``effect`` is E = M^dag M of the full record, expressed in the
    {|x0>, |x0_perp>} basis and log-scaled.  ``det_log`` is
    log |det M| of the accumulated operator, summed per step.
    ``states`` / ``log_pf_steps`` are present only when the trajectory
    was simulated with state recording (they are O(N) payload).
    """

    scheme: MeasurementScheme
    x0: PureQubitState
    record: np.ndarray
    log_pf: float
    effect: LogScaledMatrix
    det_log: float
    x_final: PureQubitState
    states: np.ndarray | None = None
    log_pf_steps: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.record)


@dataclass(frozen=True)
class ArrowOfTimeSample:
    """Per-trajectory irreversibility numbers.

    q is the arrow-of-time log-ratio, lam the squared relative weight of
    the unreachable (absolutely irreversible) component, exp_neg_q the
    fluctuation-theorem summand.  They satisfy exp_neg_q + lam = b/a
    with a, b the diagonal effect entries.
    """

    q: float
    lam: float
    exp_neg_q: float


def _sample_one(scheme, state, rng):
    bx, by, bz = state.bloch()
    u = rng.random(DRAWS_PER_STEP[scheme.kind]).reshape(1, -1)
    r = _sample_from_uniforms(scheme, 0.5 * (1 + bz), 0.5 * (1 - bz), bx, by, u)[0]
    return complex(r) if scheme.kind is SchemeKind.HETERODYNE else float(r)


def _apply_kraus(scheme, state, r):
    """Apply M(r); returns (unnormalized spinor, log readout density)."""
    op = kraus_forward(scheme, r)
    v = op.mat @ state.spinor()
    n2 = float(np.real(np.vdot(v, v)))
    if n2 == 0.0 or op.log_scale + 0.5 * math.log(n2) < _LOG_FLOOR:
        raise ImpossibleRecordError(
            f"readout {r!r} has zero forward density from state {state.bloch()}"
        )
    return v, 2.0 * op.log_scale + math.log(n2)


def forward_step(scheme: MeasurementScheme, state: PureQubitState, r) -> PureQubitState:
    """One conditional update: measurement backaction, then the drive."""
    v, _ = _apply_kraus(scheme, state, r)
    u = rabi_unitary(scheme.omega, scheme.dt).mat
    w = u @ v
    return PureQubitState.normalized(w[0], w[1])


def _evolve(scheme, x0, record=None, n_steps=None, rng=None, record_states=True):
    """Shared forward pass; samples readouts when no record is given."""
    sampling = record is None
    if sampling:
        n = int(n_steps)
        readouts = []
    else:
        n = len(record)
    u_drive = rabi_unitary(scheme.omega, scheme.dt).mat
    v_basis = np.array(
        [[x0.amp_e, -x0.amp_g.conjugate()], [x0.amp_g, x0.amp_e.conjugate()]],
        dtype=complex,
    )
    v_dag = v_basis.conj().T

    state = x0
    prod = LogScaledMatrix.from_matrix(np.eye(2))
    det_log = 0.0
    log_pf = 0.0
    states = [state.bloch()] if record_states else None
    log_pf_steps = [] if record_states else None

    for step in range(n):
        r = _sample_one(scheme, state, rng) if sampling else record[step]
        if sampling:
            readouts.append(r)
        v, log_dens = _apply_kraus(scheme, state, r)
        log_pf += log_dens
        w = u_drive @ v
        state = PureQubitState.normalized(w[0], w[1])
        op = kraus_forward(scheme, r)
        factor = v_dag @ (u_drive @ op.mat) @ v_basis
        prod = LogScaledMatrix.from_matrix(factor, op.log_scale).compose(prod)
        det_log += float(kraus_det_log(scheme, r))
        if record_states:
            states.append(state.bloch())
            log_pf_steps.append(log_pf)

    if sampling:
        if scheme.kind is SchemeKind.HETERODYNE:
            record = np.asarray(readouts, dtype=complex)
        else:
            record = np.asarray(readouts, dtype=float)
    effect = LogScaledMatrix.from_matrix(
        prod.mat.conj().T @ prod.mat, 2.0 * prod.log_scale
    )
    return Trajectory(
        scheme=scheme,
        x0=x0,
        record=np.asarray(record),
        log_pf=log_pf,
        effect=effect,
        det_log=det_log,
        x_final=state,
        states=np.asarray(states) if record_states else None,
        log_pf_steps=np.asarray(log_pf_steps) if record_states else None,
    )


def simulate_forward(
    scheme: MeasurementScheme,
    x0: PureQubitState,
    n_steps: int,
    rng: np.random.Generator,
    record_states: bool = True,
) -> Trajectory:
    """Sample one forward trajectory of ``n_steps`` measurement steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    return _evolve(scheme, x0, n_steps=n_steps, rng=rng, record_states=record_states)


def trajectory_from_record(
    scheme: MeasurementScheme,
    x0: PureQubitState,
    record,
    record_states: bool = True,
) -> Trajectory:
    """Deterministically replay a given readout record forward.

    Raises ImpossibleRecordError when the record has zero density.
    """
    return _evolve(scheme, x0, record=list(record), record_states=record_states)


def arrow_of_time(traj: Trajectory) -> ArrowOfTimeSample:
    """Arrow-of-time numbers of one trajectory.

    q = 2 log<x0|E|x0> - log det E; both terms are evaluated in log
    space so the result is invariant under rescaling the effect.
    """
    log_det_e = 2.0 * traj.det_log
    if not math.isfinite(log_det_e):
        raise SingularOperatorError("effect matrix of the record is singular")
    a_hat = traj.effect.mat[0, 0].real
    if a_hat <= 0.0:
        raise ImpossibleRecordError("record has zero forward probability from x0")
    log_a = traj.effect.log_scale + math.log(a_hat)
    q = 2.0 * log_a - log_det_e
    c_hat = traj.effect.mat[0, 1]
    lam = (c_hat.real**2 + c_hat.imag**2) / (a_hat * a_hat)
    return ArrowOfTimeSample(q=q, lam=lam, exp_neg_q=math.exp(-q))


def backward_replay(traj: Trajectory) -> tuple[np.ndarray, float]:
    """Replay the record backwards with adjugate operators.

    Starting from the final state, each step applies the inverse drive
    and then the time-reversed Kraus operator of the recorded readout.
    Returns (bloch_states, log_pb): the visited Bloch vectors ordered
    from the final state down to the initial one (the forward sequence
    reversed), and the total log-density of the reversed readouts.
    """
    scheme = traj.scheme
    u_dag = rabi_unitary(scheme.omega, scheme.dt).mat.conj().T
    psi = traj.x_final.spinor()
    visited = [traj.x_final.bloch()]
    log_pb = 0.0
    for step in range(traj.n_steps - 1, -1, -1):
        op = kraus_backward(scheme, traj.record[step])
        v = op.mat @ (u_dag @ psi)
        n2 = float(np.real(np.vdot(v, v)))
        if n2 == 0.0:
            raise ImpossibleRecordError(
                f"backward density vanished at step {step}"
            )
        log_pb += 2.0 * op.log_scale + math.log(n2)
        psi = v / math.sqrt(n2)
        visited.append(PureQubitState.normalized(psi[0], psi[1]).bloch())
    return np.asarray(visited), log_pb


def q_two_outcome(k: float, z0: float, r: int) -> float:
    """Closed-form arrow-of-time value of a single two-outcome readout."""
    if not 0.0 <= k <= 0.5:
        raise ValueError(f"k must lie in [0, 1/2], got {k}")
    if k == 0.0:
        raise ValueError("k = 0 is projective: the backward weight diverges")
    if abs(z0) > 1.0:
        raise ValueError(f"z0 must lie in [-1, 1], got {z0}")
    if r not in (-1, 1):
        raise ValueError(f"readout must be +-1, got {r!r}")
    num = r + z0 - 2.0 * k * z0
    return math.log(num * num) - math.log(4.0 * k * (1.0 - k))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Dump one trajectory as CSV: per step the readout, the Bloch vector
    after the update, and the running forward log-density."""
    if traj.states is None or traj.log_pf_steps is None:
        raise ValueError("trajectory was simulated without state recording")
    rec = np.asarray(traj.record)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAJECTORY_CSV_HEADER + "\n")
        for step in range(traj.n_steps):
            r = complex(rec[step])
            x, y, z = traj.states[step + 1]
            fh.write(
                f"{step},{r.real:.17g},{r.imag:.17g},"
                f"{x:.17g},{y:.17g},{z:.17g},{traj.log_pf_steps[step]:.17g}\n"
            )
