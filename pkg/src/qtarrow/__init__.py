"""Stochastic trajectories of continuously measured qubits.

Simulates single measurement records for two-outcome, dispersive,
homodyne and heterodyne detection of a qubit (optionally Rabi driven),
evaluates the arrow-of-time log-ratio Q of forward versus time-reversed
readout probabilities along each record, and estimates the associated
fluctuation theorem <exp(-Q)> = 1 - mu, where mu accounts for the
absolutely irreversible records that the backward process cannot produce.
"""

from .analytic import (
    CURVES,
    AnalyticCurve,
    homodyne_effective_readout,
    mean_mu_flat_z,
    mean_q_two_outcome,
    mu_dispersive_exact,
    mu_two_outcome,
    p_lambda_dispersive,
    p_q_dispersive,
    pdf_q_homodyne_single_step,
    q_dispersive,
    q_homodyne_min,
    q_homodyne_single_step,
    tabulate,
)
from .ensemble import (
    EnsembleSamples,
    FtEstimate,
    Histogram,
    UniformZInitial,
    estimate_ft,
    mean_exp_neg_q_quadrature_single_step,
    mu_quadrature_single_step,
    q_histogram,
    sample_ensemble,
    trajectory_seed,
    uniform_z_initial,
)
from .errors import (
    ConfigError,
    ImpossibleRecordError,
    NumericError,
    QtArrowError,
    SingularOperatorError,
)
from .qmath import LogScaledMatrix, PureQubitState, adjugate
from .schemes import (
    GaussianPolyDensity,
    MeasurementScheme,
    SchemeKind,
    dispersive,
    heterodyne,
    homodyne,
    kraus_backward,
    kraus_det_log,
    kraus_forward,
    rabi_unitary,
    readout_log_pdf,
    readout_pdf,
    sample_readout,
    two_outcome,
)
from .trajectory import (
    ArrowOfTimeSample,
    Trajectory,
    arrow_of_time,
    backward_replay,
    forward_step,
    q_two_outcome,
    simulate_forward,
    trajectory_from_record,
    write_trajectory_csv,
)

__version__ = "0.1.0"
