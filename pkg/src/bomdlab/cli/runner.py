"""Build solvers from a resolved config, run them and write artifacts."""

import os
from dataclasses import dataclass

import numpy as np

from .. import __version__
from ..bohmion import BohmionEnsemble, run_bohmion, run_bohmion_classical
from ..bomd import NuclearState, run_bomd
from ..electronic import LinearCrossing, ShiftedOscillators, SoftCoulombChain
from ..errors import ConfigError, InvalidInputError
from ..kernels import GaussianKernel, PhaseSpaceKernel
from ..koopmon import HybridHamiltonian, KoopmonEnsemble, run_koopmon, run_koopmon_classical
from ..madelung import Grid, TDSEPropagator, gaussian_packet, run_tdse, write_snapshot
from ..units import MassMetric
from .config import RunConfig
from .output import write_csv, write_manifest


def build_model(table):
    kind = table["kind"]
    try:
        if kind == "linear_crossing":
            return LinearCrossing(table["coupling"])
        if kind == "shifted_oscillators":
            return ShiftedOscillators(table["omegas"], table["centers"], table["offsets"],
                                      table["couplings"])
        return SoftCoulombChain(table["grid_points"], table["box"], table["charges"],
                                table["softening"], table["nuclear_softening"], table["repulsion"])
    except InvalidInputError as exc:
        raise ConfigError(str(exc), "model") from exc


def build_metric(units, model) -> MassMetric:
    masses = np.repeat(np.asarray(units["mass_ratios"], dtype=float), units["spatial_dim"])
    if masses.size != model.nuclear_dim:
        raise ConfigError(
            f"{masses.size} nuclear coordinates but the model has {model.nuclear_dim}",
            "units.mass_ratios")
    return MassMetric(masses)


def _vector(values, dim, key):
    v = np.asarray(values, dtype=float)
    if v.shape != (dim,):
        raise ConfigError(f"expected {dim} components, got {v.size}", key)
    return v


def build_grid(domain, points, dim, key):
    if len(domain) != 2 * dim:
        raise ConfigError(f"needs {2 * dim} bounds for a {dim}D grid", key)
    lower, upper = domain[0::2], domain[1::2]
    try:
        return Grid((points,) * dim, lower, upper)
    except InvalidInputError as exc:
        raise ConfigError(str(exc), key) from exc


def _ensemble_inputs(params, dim, seed, name):
    if "count" in params:
        rng = np.random.default_rng(seed)
        count = params["count"]
        q0 = _vector(params["q0"], dim, f"{name}.q0")
        p0 = _vector(params["p0"], dim, f"{name}.p0")
        q = q0 + params["sigma_q"] * rng.standard_normal((count, dim))
        p = p0 + params["sigma_p"] * rng.standard_normal((count, dim))
        return np.full(count, 1.0 / count), q, p
    q = np.asarray(params["q"], dtype=float)
    p = np.asarray(params["p"], dtype=float)
    w = np.asarray(params["weights"], dtype=float)
    for arr, key in ((q, "q"), (p, "p")):
        if arr.shape != (w.size, dim):
            raise ConfigError(f"expected {w.size} rows of {dim} components", f"{name}.{key}")
    return w, q, p


@dataclass
class RunResult:
    out_dir: str
    manifest: dict


def _vec_names(prefix, dim):
    return [f"{prefix}{j}" for j in range(dim)]


def _setup(cfg: RunConfig):
    """Validate every physical parameter before any compute starts."""
    model = build_model(cfg.model)
    metric = build_metric(cfg.units, model)
    mu = cfg.units["mu"]
    p = cfg.params
    dim = model.nuclear_dim
    try:
        if cfg.solver == "bomd":
            state = NuclearState(_vector(p["q0"], dim, "bomd.q0"),
                                 _vector(p["p0"], dim, "bomd.p0"), 0.0, metric)
            return model, metric, state
        if cfg.solver == "bohmion":
            w, q, pp = _ensemble_inputs(p, dim, cfg.seed, "bohmion")
            ens = BohmionEnsemble.adiabatic(model, w, q, pp, GaussianKernel(p["alpha"], dim), mu,
                                            metric, p["level"])
            return model, metric, ens
        if cfg.solver == "koopmon":
            w, q, pp = _ensemble_inputs(p, dim, cfg.seed, "koopmon")
            kernel = PhaseSpaceKernel(p["alpha_q"], p["alpha_p"], dim)
            ens = KoopmonEnsemble.adiabatic(model, w, q, pp, kernel, mu, metric, p["level"])
            return model, metric, ens
        if cfg.solver == "tdse":
            if not mu > 0:
                raise ConfigError("the TDSE needs mu > 0", "units.mu")
            grid = build_grid(p["domain"], p["grid_points"], dim, "tdse.domain")
            every = p["snapshot_every"]
            if every and every % cfg.run["record_every"]:
                raise ConfigError("must be a multiple of run.record_every", "tdse.snapshot_every")
            if p["order"] not in (2, 4):
                raise ConfigError("must be 2 or 4", "tdse.order")
            psi = gaussian_packet(grid, model, mu, _vector(p["q0"], dim, "tdse.q0"),
                                  _vector(p["p0"], dim, "tdse.p0"), p["sigma"], p["surface"],
                                  metric)
            return model, metric, psi
    except InvalidInputError as exc:
        raise ConfigError(str(exc), cfg.solver) from exc
    raise ConfigError(f"solver {cfg.solver!r} is not run through run()", "run")


def _run_bomd(cfg, model, metric, state, out):
    r = cfg.run
    traj = run_bomd(model, state, r["dt"], r["steps"], r["record_every"], cfg.params["level"])
    write_csv(os.path.join(out, "trajectory.csv"), traj.columns, traj.table())


def _write_particles(out, t, q, p):
    count, dim = q.shape[1], q.shape[2]
    header = ["t", "particle"] + _vec_names("q", dim) + _vec_names("p", dim)
    rows = [[t[n], a, *q[n, a], *p[n, a]] for n in range(t.size) for a in range(count)]
    write_csv(os.path.join(out, "particles.csv"), header, rows)


def _run_ensemble(cfg, model, metric, ens, out):
    r = cfg.run
    dim = model.nuclear_dim
    if cfg.solver == "bohmion":
        classical = run_bohmion_classical if ens.mu == 0 else None
    else:
        classical = run_koopmon_classical if ens.mu == 0 else None
    if classical is not None:
        res = classical(ens, model, r["dt"], r["steps"], r["record_every"])
        trajs = res.trajectories
        t = trajs[0].t
        q = np.stack([tr.q for tr in trajs], axis=1)
        p = np.stack([tr.p for tr in trajs], axis=1)
        energy = sum(w * tr.total for w, tr in zip(ens.weights, trajs))
        extra_names, extra = [], []
    elif cfg.solver == "bohmion":
        res = run_bohmion(ens, model, r["dt"], r["steps"], r["record_every"],
                          check=cfg.params["check"])
        t, q, p, energy = res.t, res.q, res.p, res.energy
        extra_names, extra = ["purity_min", "trace_error"], [res.purity_min, res.trace_error]
    else:
        res = run_koopmon(ens, HybridHamiltonian(model, metric), r["dt"], r["steps"],
                          r["record_every"], check=cfg.params["check"])
        t, q, p, energy = res.t, res.q, res.p, res.energy
        extra_names, extra = ["trace_error"], [res.trace_error]
    w = ens.weights
    header = ["t"] + _vec_names("mean_q", dim) + _vec_names("mean_p", dim) + ["energy"] + extra_names
    table = np.column_stack([t, np.einsum("a,tad->td", w, q), np.einsum("a,tad->td", w, p),
                             energy, *extra])
    write_csv(os.path.join(out, "ensemble.csv"), header, table)
    _write_particles(out, t, q, p)


def tdse_columns(dim, levels):
    return (["t", "norm"] + _vec_names("mean_r", dim) + _vec_names("mean_p", dim) + ["energy"]
            + [f"pop{k}" for k in range(levels)])


def _run_tdse(cfg, model, metric, psi, out):
    r, p = cfg.run, cfg.params
    prop = TDSEPropagator(psi.grid, model, psi.mu, r["dt"], metric, order=p["order"])
    every = p["snapshot_every"]
    res = run_tdse(psi, model, r["dt"], r["steps"], r["record_every"],
                   check_every=p["check_every"] or None, keep_snapshots=bool(every),
                   propagator=prop)
    write_csv(os.path.join(out, "observables.csv"), tdse_columns(psi.grid.dim, psi.levels),
              res.table())
    snap_dir = os.path.join(out, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    write_snapshot(os.path.join(snap_dir, "initial.bin"), psi)
    write_snapshot(os.path.join(snap_dir, "final.bin"), res.final)
    if every:
        stride = every // r["record_every"]
        for i, snap in enumerate(res.snapshots[::stride]):
            write_snapshot(os.path.join(snap_dir, f"step_{i * every:09d}.bin"), snap)


def run(cfg: RunConfig, out_dir) -> RunResult:
    """Run one solver and write config echo, outputs and manifest into ``out_dir``.

    Outputs depend only on the config (including its seed).
    """
    if cfg.solver == "compare":
        from .compare import compare_mu_limit

        report = compare_mu_limit(cfg, out_dir)
        return RunResult(out_dir, report.manifest)
    setup = _setup(cfg)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.toml"), "w") as fh:
        fh.write(cfg.to_toml())
    runner = {"bomd": _run_bomd, "bohmion": _run_ensemble, "koopmon": _run_ensemble,
              "tdse": _run_tdse}[cfg.solver]
    runner(cfg, *setup, out_dir)
    return RunResult(out_dir, write_manifest(out_dir, cfg.solver, __version__))
