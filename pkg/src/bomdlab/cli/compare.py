"""Small-``mu`` comparison of the grid TDSE against Born-Oppenheimer dynamics."""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..bohmion import BohmionEnsemble, run_bohmion_classical
from ..bomd import NuclearState, run_bomd
from ..errors import BomdlabError, ConfigError, InvalidInputError
from ..kernels import GaussianKernel
from ..madelung import TDSEPropagator, gaussian_packet, run_tdse
from .config import RunConfig
from .output import column, read_csv, write_csv, write_json, write_manifest
from .runner import _vec_names, build_grid, build_metric, build_model, tdse_columns

REDUCTION_TOL = 1e-12


@dataclass
class ComparisonReport:
    """Error table across ``mu`` and the verdict derived from it.

    Every number is recomputed from the CSV files in the run directory.
    """

    experiment: str
    rows: list
    slope: float = None
    monotone: bool = None
    reduction_error: float = None
    passed: bool = False
    manifest: dict = field(default=None, repr=False)

    def to_dict(self):
        return {"experiment": self.experiment, "rows": self.rows, "slope": self.slope,
                "monotone": self.monotone, "reduction_error": self.reduction_error,
                "reduction_tol": REDUCTION_TOL, "passed": self.passed}


def _cell_dir(i):
    return f"mu_{i:02d}"


def _read_rows(path):
    header, data = read_csv(path)
    if data.shape[0] == 0:
        raise InvalidInputError(f"{path} has no rows")
    return header, data


def build_report(out_dir) -> ComparisonReport:
    """Assemble the report from stored outputs only (bit-identical on every call)."""
    with open(os.path.join(out_dir, "cells.json")) as fh:
        cells = json.load(fh)
    dim = cells["dim"]
    b_path = os.path.join(out_dir, "bomd", "trajectory.csv")
    header, data = _read_rows(b_path)
    q_ref = np.array([column(header, data, f"q{j}", b_path)[-1] for j in range(dim)])
    t_ref = column(header, data, "t", b_path)[-1]

    rows = []
    for i, cell in enumerate(cells["cells"]):
        row = {"mu": cell["mu"], "status": cell["status"], "error": None,
               "source": f"{_cell_dir(i)}/observables.csv"}
        if cell["status"] == "ok":
            path = os.path.join(out_dir, row["source"])
            h, d = read_csv(path)
            t = column(h, d, "t", path)[-1]
            if abs(t - t_ref) > 1e-9 * max(1.0, abs(t_ref)):
                raise InvalidInputError(f"{path} ends at t = {t}, bomd at t = {t_ref}")
            r = np.array([column(h, d, f"mean_r{j}", path)[-1] for j in range(dim)])
            row["error"] = float(np.linalg.norm(r - q_ref))
        else:
            row["message"] = cell.get("message", "")
        rows.append(row)

    good = [r for r in rows if r["error"] is not None]
    slope = monotone = None
    if len(good) >= 2:
        mu = np.log([r["mu"] for r in good])
        err = np.log([max(r["error"], 1e-300) for r in good])
        slope = float(np.polyfit(mu, err, 1)[0])
        ordered = sorted(good, key=lambda r: -r["mu"])
        monotone = all(b["error"] < a["error"] for a, b in zip(ordered, ordered[1:]))

    reduction = None
    red_path = os.path.join(out_dir, "bohmion_reduction", "particles.csv")
    if os.path.exists(red_path):
        h, d = read_csv(red_path)
        qb = np.column_stack([column(h, d, f"q{j}", red_path) for j in range(dim)])
        qr = np.column_stack([column(header, data, f"q{j}", b_path) for j in range(dim)])
        pb = np.column_stack([column(h, d, f"p{j}", red_path) for j in range(dim)])
        pr = np.column_stack([column(header, data, f"p{j}", b_path) for j in range(dim)])
        if qb.shape != qr.shape:
            raise InvalidInputError("bohmion reduction and bomd have different lengths")
        reduction = float(max(np.max(np.abs(qb - qr)), np.max(np.abs(pb - pr))))

    passed = all(r["status"] == "ok" for r in rows)
    if monotone is not None:
        passed = passed and monotone
    if reduction is not None:
        passed = passed and reduction <= REDUCTION_TOL
    return ComparisonReport("mu_limit", rows, slope, monotone, reduction, passed)


def write_report(report: ComparisonReport, out_dir):
    write_json(os.path.join(out_dir, "report.json"), report.to_dict())
    table = [[r["mu"], np.nan if r["error"] is None else r["error"]] for r in report.rows]
    write_csv(os.path.join(out_dir, "errors.csv"), ["mu", "error"], table)


def compare_mu_limit(cfg: RunConfig, out_dir) -> ComparisonReport:
    """Run the TDSE at each ``mu`` and BOMD once; tabulate ``|<r>(T) - q(T)|``.

    A failing TDSE cell is recorded in the report instead of aborting it.
    """
    p = cfg.params
    model = build_model(cfg.model)
    metric = build_metric(cfg.units, model)
    dim = model.nuclear_dim
    grid = build_grid(p["domain"], p["grid_points"], dim, "compare.domain")
    q0 = np.asarray(p["q0"], dtype=float)
    p0 = np.asarray(p["p0"], dtype=float)
    if q0.shape != (dim,) or p0.shape != (dim,):
        raise ConfigError(f"q0 and p0 need {dim} components", "compare.q0")
    if any(m <= 0 for m in p["mu_values"]):
        raise ConfigError("every mu must be positive", "compare.mu_values")
    if p["order"] not in (2, 4):
        raise ConfigError("must be 2 or 4", "compare.order")
    steps = int(round(p["T"] / p["dt"]))
    bomd_steps = int(round(p["T"] / p["bomd_dt"]))
    for n, dt, key in ((steps, p["dt"], "compare.dt"), (bomd_steps, p["bomd_dt"], "compare.bomd_dt")):
        if abs(n * dt - p["T"]) > 1e-9 * p["T"]:
            raise ConfigError("T must be an integer multiple of the step", key)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.toml"), "w") as fh:
        fh.write(cfg.to_toml())

    bomd_dir = os.path.join(out_dir, "bomd")
    os.makedirs(bomd_dir, exist_ok=True)
    state = NuclearState(q0, p0, 0.0, metric)
    traj = run_bomd(model, state, p["bomd_dt"], bomd_steps, level=p["surface"])
    write_csv(os.path.join(bomd_dir, "trajectory.csv"), traj.columns, traj.table())

    if p["bohmion_check"]:
        ens = BohmionEnsemble.adiabatic(model, [1.0], q0[None], p0[None],
                                        GaussianKernel(1.0, dim), 0.0, metric, p["surface"])
        res = run_bohmion_classical(ens, model, p["bomd_dt"], bomd_steps)
        tr = res.trajectories[0]
        red = os.path.join(out_dir, "bohmion_reduction")
        os.makedirs(red, exist_ok=True)
        write_csv(os.path.join(red, "particles.csv"),
                  ["t"] + _vec_names("q", dim) + _vec_names("p", dim),
                  np.column_stack([tr.t, tr.q, tr.p]))

    cells = []
    for i, mu in enumerate(p["mu_values"]):
        cell_dir = os.path.join(out_dir, _cell_dir(i))
        os.makedirs(cell_dir, exist_ok=True)
        sigma = p["sigma_scale"] * mu ** 0.25
        try:
            psi = gaussian_packet(grid, model, mu, q0, p0, sigma, p["surface"], metric)
            prop = TDSEPropagator(grid, model, mu, p["dt"], metric, order=p["order"])
            res = run_tdse(psi, model, p["dt"], steps, record_every=steps or 1, propagator=prop)
            write_csv(os.path.join(cell_dir, "observables.csv"),
                      tdse_columns(dim, psi.levels), res.table())
            cells.append({"mu": mu, "sigma": sigma, "status": "ok"})
        except BomdlabError as exc:
            cells.append({"mu": mu, "sigma": sigma, "status": "failed",
                          "message": f"{type(exc).__name__}: {exc}"})
    write_json(os.path.join(out_dir, "cells.json"), {"dim": dim, "cells": cells})

    report = build_report(out_dir)
    write_report(report, out_dir)
    report.manifest = write_manifest(out_dir, "compare", __version__)
    return report
