"""Offline, online and study commands."""
from __future__ import annotations

import csv
import io as _io
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .assembly import Discretization
from .oseen import (SweepError, oseen_solve, reynolds_estimate, snapshot_sweep)
from .rom import build_reduced_model, compute_pod, error_study, reconstruct

log = logging.getLogger(__name__)


class StudyError(RuntimeError):
    pass


def make_discretization(config: io.RunConfig) -> Discretization:
    return Discretization(config.geometry(), p=config.p, nu=config.nu,
                          element_width=config.element_width,
                          rows_per_band=config.rows_per_band)


def format_table(header, rows) -> str:
    """Right-aligned plain-text table."""
    cells = [[str(h) for h in header]] + [[_cell(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.6e}"
    return str(v)


def write_csv(path, header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    io._atomic_write(path, buf.getvalue().encode())


# -- offline -------------------------------------------------------------------

def cmd_offline(config: io.RunConfig, archive=None, echo=print) -> dict:
    """Snapshot sweep, POD and projection; writes the archive and returns its manifest."""
    archive = Path(archive or config.output_dir)
    disc = make_discretization(config)
    log.info("N_delta = %d, %d elements", disc.n_dofs, disc.mesh.n_elements)
    snaps = snapshot_sweep(disc, config.snapshot_params(), config.oseen_tol,
                           config.oseen_max_iter)
    pod = compute_pod(snaps.states, config.energy_threshold)
    model = build_reduced_model(disc, pod, n_max=max(config.n_max, pod.N))
    manifest = io.save_archive(archive, model, pod, snaps, config)
    echo(format_table(["quantity", "value"], [
        ("N_delta", disc.n_dofs), ("N", pod.N), ("N_stored", model.N), ("Q", model.Q),
        ("snapshots", snaps.n_snapshots), ("POD rank", pod.rank),
        ("Re min", min(snaps.reynolds)), ("Re max", max(snaps.reynolds)),
    ]))
    echo(f"archive written to {archive}")
    return manifest


# -- online --------------------------------------------------------------------

def cmd_online(archive, mu, dump_field=None, N=None, tol=1e-8, max_iter=100, echo=print):
    """Reduced solve at ``mu`` using only ``reduced/`` and the manifest.

    ``N`` defaults to the threshold size. ``dump_field`` writes the
    reconstructed free-DOF vector and is the only option that reads
    N_delta-sized data.
    """
    model, manifest = io.load_reduced_model(archive)
    N = int(manifest["N"]) if N is None else int(N)
    model = model.truncate(min(N, model.N))
    sol = model.online_solve(mu, tol, max_iter)
    echo(format_table(["mu", "N", "iterations", "converged", "last increment"],
                      [(sol.mu, model.N, sol.iterations, sol.converged,
                        sol.residual_history[-1])]))
    echo(format_table(["n", "coefficient"], [(i + 1, c) for i, c in enumerate(sol.coeffs)]))
    if dump_field is not None:
        modes = io.read_matrix(Path(archive) / "full" / "modes.mat")
        io.write_matrix(dump_field, reconstruct(modes, sol.coeffs))
        echo(f"reconstructed field written to {dump_field}")
    return sol


# -- study ---------------------------------------------------------------------

@dataclass
class StudyReport:
    energy: np.ndarray
    singular_values: np.ndarray
    errors: object                 # ErrorTable
    fom_step: float
    rom_step: float
    timing_dimension: int
    reynolds: tuple[float, float]
    N_threshold: int

    @property
    def speedup(self) -> float:
        return self.fom_step / self.rom_step


def _median_time(fn, repeats):
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def time_steps(disc, model, mu, wind, coeffs, dimension, repeats=11):
    """Median wall time of one FOM and one ROM Oseen step at ``mu``."""
    fom = _median_time(lambda: disc.system(mu, wind).solve(), repeats)
    sub = model.truncate(dimension)
    c = np.asarray(coeffs)[:dimension]
    rom = _median_time(lambda: sub.step(mu, c), repeats)
    return fom, rom


def cmd_study(config: io.RunConfig, archive, out=None, echo=print) -> StudyReport:
    archive = Path(archive)
    out = Path(out) if out is not None else archive / "study"
    model, manifest = io.load_reduced_model(archive)
    pod = io.load_pod(archive)
    disc = make_discretization(config)
    if disc.mesh.fingerprint() != manifest["mesh_hash"]:
        raise StudyError("configuration does not match the archive's mesh")

    truths = []
    for mu in config.verification_params():
        state = oseen_solve(disc, mu, tol=config.oseen_tol, max_iter=config.oseen_max_iter)
        if not state.converged:
            raise SweepError(mu, state)
        truths.append(state)
    sizes = range(1, model.N + 1)
    table = error_study(disc, pod, model, truths, sizes, config.oseen_tol, config.oseen_max_iter)

    probe = truths[int(np.argmin([abs(t.mu - 1.0) for t in truths]))]
    dim = min(config.timing_dimension, model.N)
    coeffs = pod.all_modes[:, :dim].T @ probe.x
    fom, rom = time_steps(disc, model, probe.mu, probe.velocity, coeffs, dim,
                          config.timing_repeats)
    snap_re = [float(v) for v in manifest["snapshot_reynolds"].split(",")]
    re_all = snap_re + [reynolds_estimate(t, disc) for t in truths]
    report = StudyReport(pod.energy(), pod.singular_values[:pod.rank], table, fom, rom, dim,
                         (min(re_all), max(re_all)), pod.N)
    write_study(report, out, echo)
    return report


def write_study(report: StudyReport, out, echo=print):
    out = Path(out)
    s2 = report.singular_values ** 2
    residual = np.cumsum(s2[::-1])[::-1] / np.sum(s2)
    residual = np.append(residual[1:], 0.0)
    energy_rows = [(i + 1, s, e, r) for i, (s, e, r) in
                   enumerate(zip(report.singular_values, report.energy, residual))]
    header = ["N", "singular_value", "cumulative_energy", "residual_energy"]
    write_csv(out / "pod_energy.csv", header, energy_rows)
    echo(format_table(header, energy_rows))

    t = report.errors
    err_rows = [(int(n), mx, mn, int(it.max())) for n, mx, mn, it in
                zip(t.sizes, t.max_error, t.mean_error, t.iterations)]
    header = ["N", "max_rel_error", "mean_rel_error", "max_iterations"]
    write_csv(out / "errors_vs_N.csv", header, err_rows)
    echo(format_table(header, err_rows))

    header = ["quantity", "value"]
    rows = [("fom_step_seconds", report.fom_step), ("rom_step_seconds", report.rom_step),
            ("rom_dimension", report.timing_dimension), ("speedup", report.speedup)]
    write_csv(out / "timing.csv", header, rows)
    echo(format_table(header, rows))

    rows = [("reynolds_min", report.reynolds[0]), ("reynolds_max", report.reynolds[1]),
            ("threshold_N", report.N_threshold)]
    write_csv(out / "summary.csv", header, rows)
    echo(format_table(header, rows))
