"""Desk-scale reconstruction of the summary figures as CSV series.

Each builder samples the ensembles a figure needs, writes one CSV per
series into the output directory and records the file in a manifest
(series name, panel grouping, plot columns, parameters).  Rendering the
manifest to images is a separate concern, see ``plots``.

Conventions: the characteristic measurement time is the time unit
(tau = 1), the fluorescence rate matches it (gamma = 1/tau) and the
continuous schemes step at dt = tau/100.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .analytic import (
    AnalyticCurve,
    mean_q_two_outcome,
    mu_dispersive_exact,
    mu_two_outcome,
    p_lambda_dispersive,
    p_q_dispersive,
    pdf_q_homodyne_single_step,
    q_homodyne_min,
)
from .ensemble import (
    estimate_ft,
    mean_exp_neg_q_quadrature_single_step,
    mu_quadrature_single_step,
    q_histogram,
    sample_ensemble,
    trajectory_seed,
)
from .qmath import PureQubitState
from .schemes import dispersive, heterodyne, homodyne, two_outcome
from .trajectory import arrow_of_time, simulate_forward, trajectory_from_record, write_trajectory_csv

FIGURE_IDS = ("fig1", "fig2", "s1", "s2", "s3")

DT = 0.01
BASE_TRAJECTORIES = 100_000
DURATIONS = (0.5, 1.0, 2.0)
T_OVER_TAU_GRID = (0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
CONTINUOUS_SCHEMES = ("homodyne", "heterodyne", "dispersive")

FT_COLUMNS = (
    "meanExpNegQ",
    "meanExpNegQStderr",
    "muHat",
    "muHatStderr",
    "meanQ",
    "meanQStderr",
    "bound",
)


def _ft_row(est):
    return (
        est.mean_exp_neg_q,
        est.mean_exp_neg_q_stderr,
        est.mu_hat,
        est.mu_hat_stderr,
        est.mean_q,
        est.mean_q_stderr,
        est.bound,
    )


def _write_table(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % float(v) for v in row) + "\n")


def _scheme(name: str, omega: float = 0.0):
    if name == "dispersive":
        return dispersive(1.0, DT, omega=omega)
    if name == "homodyne":
        return homodyne(1.0, DT, omega=omega)
    if name == "heterodyne":
        return heterodyne(1.0, DT, omega=omega)
    raise ValueError(f"unknown scheme name {name!r}")


def _single_step_scheme(name: str, eps: float):
    # one step whose strength parameter is eps = dt/tau = gamma*dt
    if name == "dispersive":
        return dispersive(1.0, eps)
    if name == "homodyne":
        return homodyne(1.0, eps)
    if name == "heterodyne":
        return heterodyne(1.0, eps)
    raise ValueError(f"unknown scheme name {name!r}")


def _tag(t: float) -> str:
    return ("%g" % t).replace(".", "")


class _FigureRun:
    """Accumulates the series files and manifest entries of one figure."""

    def __init__(self, figure: str, out_dir: str, scale: int, seed: int, workers: int):
        self.figure = figure
        self.out_dir = out_dir
        self.scale = int(scale)
        self.seed = int(seed)
        self.workers = int(workers)
        self.n_trajectories = max(100, BASE_TRAJECTORIES // self.scale)
        self.series: list[dict] = []
        self._next = 0

    def path(self, fname: str) -> str:
        return os.path.join(self.out_dir, fname)

    def subseed(self) -> int:
        # one deterministic master seed per ensemble, in creation order
        s = trajectory_seed(self.seed, self._next)
        self._next += 1
        return s

    def sample(self, scheme, x0, n_steps: int):
        return sample_ensemble(
            scheme,
            x0,
            n_steps,
            self.n_trajectories,
            self.subseed(),
            workers=self.workers,
        )

    def add(self, name, kind, fname, panel, params, x=None, y=None) -> None:
        entry = {
            "name": name,
            "kind": kind,
            "file": fname,
            "panel": panel,
            "params": params,
        }
        if x is not None:
            entry["x"] = x
        if y is not None:
            entry["y"] = list(y)
        self.series.append(entry)

    def manifest(self) -> dict:
        return {
            "figure": self.figure,
            "seed": self.seed,
            "scale": self.scale,
            "trajectoriesPerEnsemble": self.n_trajectories,
            "series": self.series,
        }


def _q_grid(edges, lo_floor: float, n: int = 600) -> np.ndarray:
    lo = max(float(edges[0]), lo_floor)
    hi = float(edges[-1])
    if not hi > lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def _build_fig1(run: _FigureRun) -> None:
    x0 = PureQubitState.plus_x()
    for name in CONTINUOUS_SCHEMES:
        rng = np.random.default_rng(run.subseed())
        traj = simulate_forward(_scheme(name), x0, 200, rng)
        fname = f"record_{name}.csv"
        write_trajectory_csv(traj, run.path(fname))
        run.add(
            f"record-{name}",
            "record",
            fname,
            f"record-{name}",
            {"scheme": name, "dt": DT, "nSteps": 200},
        )
    for name in CONTINUOUS_SCHEMES:
        sch = _scheme(name)
        edges_at = {}
        for t in DURATIONS:
            samples = run.sample(sch, x0, round(t / DT))
            hist = q_histogram(samples.q, bins=100)
            edges_at[t] = hist.edges
            fname = f"hist_q_{name}_T{_tag(t)}.csv"
            hist.write_csv(run.path(fname))
            run.add(
                f"hist-q-{name}-T{_tag(t)}",
                "histogram",
                fname,
                f"pq-{name}",
                {
                    "scheme": name,
                    "dt": DT,
                    "tOverTau": t,
                    "nTrajectories": samples.n_trajectories,
                    "seed": samples.seed,
                },
            )
        if name == "dispersive":
            for t in DURATIONS:
                grid = _q_grid(edges_at[t], 1e-4)
                curve = AnalyticCurve(grid, p_q_dispersive(grid, t), f"arrow-density-dispersive tOverTau={t:g}")
                fname = f"curve_pq_dispersive_T{_tag(t)}.csv"
                curve.write_csv(run.path(fname))
                run.add(
                    f"curve-pq-dispersive-T{_tag(t)}",
                    "curve",
                    fname,
                    "pq-dispersive",
                    {"tOverTau": t},
                    x="x",
                    y=["value"],
                )
        if name == "homodyne":
            # one effective step of strength eps' = T/tau approximates the
            # concatenated run; shown for the shortest duration
            eps_eff = 0.5
            grid = _q_grid(edges_at[0.5], q_homodyne_min(eps_eff) + 1e-9)
            curve = AnalyticCurve(
                grid,
                pdf_q_homodyne_single_step(eps_eff, grid),
                f"arrow-density-homodyne-effective eps={eps_eff:g}",
            )
            fname = "curve_pq_homodyne_eff05.csv"
            curve.write_csv(run.path(fname))
            run.add(
                "curve-pq-homodyne-effective",
                "curve",
                fname,
                "pq-homodyne",
                {"epsEffective": eps_eff, "tOverTau": 0.5},
                x="x",
                y=["value"],
            )


def _build_fig2(run: _FigureRun) -> None:
    x0 = PureQubitState.plus_x()
    for name in ("dispersive", "homodyne", "heterodyne"):
        sch = _scheme(name)
        rows = []
        first_seed = None
        for t in T_OVER_TAU_GRID:
            samples = run.sample(sch, x0, round(t / DT))
            if first_seed is None:
                first_seed = samples.seed
            rows.append((t,) + _ft_row(estimate_ft(samples)))
        fname = f"ft_{name}.csv"
        _write_table(run.path(fname), ("tOverTau",) + FT_COLUMNS, rows)
        run.add(
            f"ft-{name}",
            "points",
            fname,
            "ft",
            {
                "scheme": name,
                "dt": DT,
                "nTrajectories": run.n_trajectories,
                "firstSeed": first_seed,
            },
            x="tOverTau",
            y=["meanExpNegQ", "muHat"],
        )
    tgrid = np.arange(0.05, 2.0001, 0.025)
    rows = []
    for t in tgrid:
        mu = mu_dispersive_exact(float(t))
        rows.append((t, mu, 1.0 - mu))
    fname = "exact_dispersive.csv"
    _write_table(run.path(fname), ("tOverTau", "muExact", "oneMinusMuExact"), rows)
    run.add(
        "exact-dispersive",
        "curve",
        fname,
        "ft",
        {"scheme": "dispersive", "z0": 0.0},
        x="tOverTau",
        y=["oneMinusMuExact"],
    )


def _build_s1(run: _FigureRun) -> None:
    # single two-outcome step from the +x state: both records enumerated
    # through the trajectory engine, next to the closed-form 1 - mu
    x0 = PureQubitState.plus_x()
    ks = np.linspace(0.0025, 0.5, 200)
    ft_rows = []
    for k in ks:
        sch = two_outcome(float(k))
        lhs = 0.0
        for r in (-1, 1):
            traj = trajectory_from_record(sch, x0, [r], record_states=False)
            sample = arrow_of_time(traj)
            lhs += math.exp(traj.log_pf) * math.exp(-sample.q)
        ft_rows.append((k, lhs, 1.0 - mu_two_outcome(float(k), 0.0)))
    fname = "two_outcome_ft.csv"
    _write_table(run.path(fname), ("k", "expNegQ", "oneMinusMu"), ft_rows)
    run.add(
        "two-outcome-ft",
        "curve",
        fname,
        "ft",
        {"scheme": "two_outcome", "z0": 0.0},
        x="k",
        y=["expNegQ", "oneMinusMu"],
    )
    mean_rows = [(k, mean_q_two_outcome(float(k), 0.0)) for k in ks]
    fname = "two_outcome_mean_q.csv"
    _write_table(run.path(fname), ("k", "meanQ"), mean_rows)
    run.add(
        "two-outcome-mean-q",
        "curve",
        fname,
        "mean-q",
        {"scheme": "two_outcome", "z0": 0.0},
        x="k",
        y=["meanQ"],
    )


def _build_s2(run: _FigureRun) -> None:
    x0 = PureQubitState.plus_x()
    eps_grid = np.linspace(0.05, 0.95, 19)
    eps_mc = (0.1, 0.3, 0.5, 0.7, 0.9)
    for name in ("dispersive", "homodyne", "heterodyne"):
        rows = []
        for eps in eps_grid:
            sch = _single_step_scheme(name, float(eps))
            rows.append(
                (
                    eps,
                    mean_exp_neg_q_quadrature_single_step(sch, x0),
                    mu_quadrature_single_step(sch, x0),
                )
            )
        fname = f"sstep_{name}_quad.csv"
        _write_table(run.path(fname), ("eps", "expNegQ", "mu"), rows)
        run.add(
            f"sstep-{name}-quad",
            "curve",
            fname,
            "single-step",
            {"scheme": name, "nSteps": 1},
            x="eps",
            y=["expNegQ", "mu"],
        )
        mc_rows = []
        for eps in eps_mc:
            sch = _single_step_scheme(name, float(eps))
            samples = run.sample(sch, x0, 1)
            mc_rows.append((eps,) + _ft_row(estimate_ft(samples)))
        fname = f"sstep_{name}_mc.csv"
        _write_table(run.path(fname), ("eps",) + FT_COLUMNS, mc_rows)
        run.add(
            f"sstep-{name}-mc",
            "points",
            fname,
            "single-step",
            {"scheme": name, "nSteps": 1, "nTrajectories": run.n_trajectories},
            x="eps",
            y=["meanExpNegQ", "muHat"],
        )
    omegas = (0.0, 0.5, 1.0, 1.5, 2.0)
    for name in ("dispersive", "homodyne", "heterodyne"):
        rows = []
        for omega in omegas:
            sch = _scheme(name, omega=omega)
            samples = run.sample(sch, x0, 50)
            rows.append((omega,) + _ft_row(estimate_ft(samples)))
        fname = f"rabi_{name}.csv"
        _write_table(run.path(fname), ("omega",) + FT_COLUMNS, rows)
        run.add(
            f"rabi-{name}",
            "points",
            fname,
            "rabi",
            {
                "scheme": name,
                "dt": DT,
                "tOverTau": 0.5,
                "nTrajectories": run.n_trajectories,
            },
            x="omega",
            y=["meanExpNegQ", "muHat"],
        )


def _build_s3(run: _FigureRun) -> None:
    x0 = PureQubitState.plus_x()
    sch = _scheme("dispersive")
    marker_rows = []
    for t in DURATIONS:
        samples = run.sample(sch, x0, round(t / DT))
        hq = q_histogram(samples.q, bins=100)
        fname = f"hist_q_dispersive_T{_tag(t)}.csv"
        hq.write_csv(run.path(fname))
        run.add(
            f"hist-q-dispersive-T{_tag(t)}",
            "histogram",
            fname,
            "pq",
            {
                "scheme": "dispersive",
                "tOverTau": t,
                "nTrajectories": samples.n_trajectories,
                "seed": samples.seed,
            },
        )
        hl = q_histogram(samples.lam, bins=100, lo=0.0, hi=1.0)
        fname = f"hist_lambda_dispersive_T{_tag(t)}.csv"
        hl.write_csv(run.path(fname))
        run.add(
            f"hist-lambda-dispersive-T{_tag(t)}",
            "histogram",
            fname,
            "plambda",
            {
                "scheme": "dispersive",
                "tOverTau": t,
                "nTrajectories": samples.n_trajectories,
                "seed": samples.seed,
            },
        )
        qgrid = _q_grid(hq.edges, 1e-4)
        curve = AnalyticCurve(qgrid, p_q_dispersive(qgrid, t), f"arrow-density-dispersive tOverTau={t:g}")
        fname = f"curve_pq_dispersive_T{_tag(t)}.csv"
        curve.write_csv(run.path(fname))
        run.add(
            f"curve-pq-dispersive-T{_tag(t)}",
            "curve",
            fname,
            "pq",
            {"tOverTau": t},
            x="x",
            y=["value"],
        )
        lgrid = np.linspace(1e-4, 1.0 - 1e-4, 600)
        curve = AnalyticCurve(
            lgrid, p_lambda_dispersive(lgrid, t), f"unreachable-weight-density tOverTau={t:g}"
        )
        fname = f"curve_plambda_dispersive_T{_tag(t)}.csv"
        curve.write_csv(run.path(fname))
        run.add(
            f"curve-plambda-dispersive-T{_tag(t)}",
            "curve",
            fname,
            "plambda",
            {"tOverTau": t},
            x="x",
            y=["value"],
        )
        marker_rows.append((t,) + _ft_row(estimate_ft(samples)))
    fname = "ft_markers.csv"
    _write_table(run.path(fname), ("tOverTau",) + FT_COLUMNS, marker_rows)
    run.add(
        "ft-markers",
        "points",
        fname,
        "ft",
        {"scheme": "dispersive", "nTrajectories": run.n_trajectories},
        x="tOverTau",
        y=["meanExpNegQ", "muHat"],
    )
    tgrid = np.arange(0.05, 2.0001, 0.025)
    rows = []
    for t in tgrid:
        mu = mu_dispersive_exact(float(t))
        rows.append((t, 1.0 - mu, mu))
    fname = "ft_exact.csv"
    _write_table(run.path(fname), ("tOverTau", "oneMinusMuExact", "muExact"), rows)
    run.add(
        "ft-exact",
        "curve",
        fname,
        "ft",
        {"scheme": "dispersive", "z0": 0.0},
        x="tOverTau",
        y=["oneMinusMuExact", "muExact"],
    )
    # homodyne run whose concatenation is summarized by one effective step
    # of strength eps' = N*eps = T/tau = 0.5
    eps_eff = 0.5
    n_steps = 100
    sch_h = homodyne(1.0, eps_eff / n_steps)
    samples = run.sample(sch_h, x0, n_steps)
    hist = q_histogram(samples.q, bins=100)
    fname = "hist_q_homodyne_eff05.csv"
    hist.write_csv(run.path(fname))
    run.add(
        "hist-q-homodyne",
        "histogram",
        fname,
        "homodyne-effective",
        {
            "scheme": "homodyne",
            "dt": eps_eff / n_steps,
            "tOverTau": 0.5,
            "nTrajectories": samples.n_trajectories,
            "seed": samples.seed,
        },
    )
    grid = _q_grid(hist.edges, q_homodyne_min(eps_eff) + 1e-9)
    curve = AnalyticCurve(
        grid,
        pdf_q_homodyne_single_step(eps_eff, grid),
        f"arrow-density-homodyne-effective eps={eps_eff:g}",
    )
    fname = "curve_pq_homodyne_eff05.csv"
    curve.write_csv(run.path(fname))
    run.add(
        "curve-pq-homodyne-effective",
        "curve",
        fname,
        "homodyne-effective",
        {"epsEffective": eps_eff},
        x="x",
        y=["value"],
    )


_BUILDERS = {
    "fig1": _build_fig1,
    "fig2": _build_fig2,
    "s1": _build_s1,
    "s2": _build_s2,
    "s3": _build_s3,
}


def build_figure(
    figure_id: str,
    out_dir: str,
    scale: int = 1,
    seed: int = 12345,
    workers: int = 1,
) -> dict:
    """Write every data series of one figure plus a manifest.json.

    ``scale`` divides the default 1e5 trajectories per ensemble for
    quick desk runs.  Returns the manifest dict.
    """
    if figure_id not in FIGURE_IDS:
        raise ValueError(f"unknown figure id {figure_id!r}; expected one of {FIGURE_IDS}")
    if int(scale) < 1:
        raise ValueError(f"scale must be a positive integer, got {scale}")
    os.makedirs(out_dir, exist_ok=True)
    run = _FigureRun(figure_id, out_dir, scale, seed, workers)
    _BUILDERS[figure_id](run)
    manifest = run.manifest()
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest
