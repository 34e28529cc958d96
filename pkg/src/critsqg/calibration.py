"""Calibration protocol for the universal constants of the diagnostics.

The analysis guarantees that universal constants with the required properties
exist but never exhibits values.  To make every envelope concrete and testable
this module fixes a published corpus (seeds, bandwidths, resolutions below)
and chooses each constant as the tightest value for which its governing
inequality holds corpus-wide, padded with a x2 safety margin; the results are
pinned in a versioned key=value file shipped with the package (and checked by
the regression suite).  Directions:

==========  ===============================================================
constant    governing inequality (safe direction)
==========  ===============================================================
c0          L^p decay envelope dominates measured norms (smaller = safer;
            pinned at half the largest corpus-valid rate)
eps0        admissible Hoelder exponent alpha_0 = min{eps0*kappa/M_inf, 1/4}
            (fixed protocol choice; smaller = safer)
c2          cubic lower bound on D[delta_h theta] (larger = safer)
c5          Hoelder-envelope ODE dominates g(t) (larger = safer)
eps1        post-transient C^{alpha_*} bound 2||f||_inf/(eps1*kappa)
            (smaller = safer; pinned at half the largest valid value)
c7          improved lower bound on D[grad theta] (larger = safer)
c8          velocity-splitting bound on |grad u| |grad theta|^2
c9          H^{3/2} differential inequality coefficient
c10         H^1 quadratic-form bound on the linearized generator
c11         eigenvalue counting lambda_j >= sqrt(j)/c11 (exact enumeration,
            no margin: the minimum over the first 10^4 eigenvalues)
c_backward  log-convexity budget on the pair corpus over the [0, 5] horizon
==========  ===============================================================

Calibration is expensive (minutes); it runs once and its output is committed.
Regenerate with ``python -m critsqg.calibration``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .diagnostics import (
    UniversalConstants,
    decay_envelope,
    m_alpha_envelope,
    save_constants,
)
from .kernels import dissipation_field
from .solver import FieldSpec, SolverConfig, Trajectory, build_field, build_force, run
from .spectral import (
    SpectralField,
    TorusGrid,
    gradient,
    holder_seminorm,
    inner_h1,
    lp_norm,
    resample,
    riesz_perp,
    sobolev_norm,
)
from .tangent import eigenvalue_count_constant, linearized_rhs

CONSTANTS_VERSION = "2026.08-corpus1"

# ---------------------------------------------------------------------------
# published corpus

KERNEL_CORPUS_N = 64
KERNEL_CORPUS = [(seed, 8, 1.0) for seed in range(20)]  # (seed, band, linf norm)

KERNEL_SHIFTS = [
    (np.pi / 8, 0.0), (0.0, np.pi / 8), (np.pi / 4, np.pi / 4), (np.pi / 2, 0.0),
    (0.0, np.pi / 2), (np.pi, np.pi), (3 * np.pi / 8, np.pi / 8), (np.pi / 16, 0.0),
]

SOLVER_CORPUS_N = 48
SOLVER_FORCES = [
    FieldSpec(kind="zero"),
    FieldSpec(kind="single_mode", k=(1, 1), amplitude=0.1),
    FieldSpec(kind="random_band", band=3, amplitude=0.15, seed=11),
]
SOLVER_DATA = [
    FieldSpec(kind="single_mode", k=(1, 0), amplitude=1.0),
    FieldSpec(kind="random_band", band=4, amplitude=0.8, seed=21),
    FieldSpec(kind="random_band", band=6, amplitude=0.5, seed=22),
]
SOLVER_T_END = 10.0
SOLVER_DT = 1e-2

BURGERS_N = 256
BURGERS_RUNS = [
    (FieldSpec(kind="single_mode", k=(1,), amplitude=1.0), FieldSpec(kind="zero")),
    (FieldSpec(kind="random_band", band=4, amplitude=0.8, seed=31),
     FieldSpec(kind="single_mode", k=(2,), amplitude=0.1)),
]

PAIR_PERTURBATION = 1e-3
PAIR_HORIZON = 5.0


def solver_corpus_runs() -> List[Trajectory]:
    """The 9 forced SQG runs (3 forces x 3 data) used throughout calibration."""
    grid = TorusGrid(2, SOLVER_CORPUS_N)
    out = []
    for fspec in SOLVER_FORCES:
        force = build_force(fspec, grid)
        for dspec in SOLVER_DATA:
            theta0 = build_field(dspec, grid)
            cfg = SolverConfig(kappa=1.0, dt=SOLVER_DT, t_end=SOLVER_T_END, snapshot_dt=0.1)
            out.append(run(theta0, cfg, force, report_ps=(2, 4)))
    return out


def burgers_corpus_runs() -> List[Trajectory]:
    grid = TorusGrid(1, BURGERS_N)
    out = []
    for dspec, fspec in BURGERS_RUNS:
        force = build_force(fspec, grid)
        theta0 = build_field(dspec, grid)
        cfg = SolverConfig(kappa=1.0, dt=1e-3, t_end=5.0, snapshot_dt=0.1)
        out.append(run(theta0, cfg, force, report_ps=(2, 4)))
    return out


def kernel_corpus_fields() -> List[SpectralField]:
    from .solver import random_band_field

    grid = TorusGrid(2, KERNEL_CORPUS_N)
    return [random_band_field(grid, band, norm, seed) for seed, band, norm in KERNEL_CORPUS]


# ---------------------------------------------------------------------------
# individual calibrations


def calibrate_c2(fields: Sequence[SpectralField]) -> float:
    """Tightest c2 with min ratio 1 over corpus x shifts, then x2."""
    worst = 0.0
    for phi in fields:
        linf = lp_norm(phi, np.inf)
        for h in KERNEL_SHIFTS:
            from .spectral import shift as _shift

            delta = _shift(phi, h) - phi
            dvals = np.abs(delta.values())
            mask = dvals > 1e-8 * linf
            if not mask.any():
                continue
            D = dissipation_field(delta, 1.0)
            hnorm = float(np.hypot(*h))
            need = dvals[mask] ** 3 / (np.maximum(D[mask], 1e-300) * linf * hnorm)
            worst = max(worst, float(need.max()))
    return 2.0 * worst


def _envelope_holds(traj: Trajectory, p, c0: float) -> bool:
    kappa = traj.config.kappa
    n0 = lp_norm(traj.fields[0], p)
    nf = lp_norm(traj.force.field, p)
    for t, rep in zip(traj.times, traj.reports):
        norm = rep.linf if p == np.inf else (rep.l2 if p == 2 else rep.lp[int(p)])
        if norm > float(decay_envelope(p, t, n0, nf, kappa, c0)) * (1.0 + 1e-9):
            return False
    return True


def calibrate_c0(runs: Sequence[Trajectory]) -> float:
    """Largest decay rate the corpus supports for p in {2, 4, inf}, halved."""
    lo, hi = 1e-3, 4.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        ok = all(_envelope_holds(tr, p, mid) for tr in runs for p in (2, 4, np.inf))
        if ok:
            lo = mid
        else:
            hi = mid
    return 0.5 * lo


def _holder_series(traj: Trajectory, alpha: float) -> np.ndarray:
    return np.array([holder_seminorm(f, alpha).value for f in traj.fields])


def _envelope_dominates(traj: Trajectory, alpha: float, series: np.ndarray,
                        c0: float, c5: float) -> bool:
    kappa = traj.config.kappa
    m0 = float(series[0])
    m_inf = lp_norm(traj.fields[0], np.inf) + traj.force.linf / (c0 * kappa)
    env = m_alpha_envelope(m0, m_inf, kappa, c5, np.asarray(traj.times))
    return bool(np.all(series**2 <= env.m_alpha**2 * (1.0 + 1e-9) + 1e-300))


def calibrate_c5(runs: Sequence[Trajectory], eps0: float, c0: float) -> float:
    """Smallest c5 whose envelope ODE dominates g(t) corpus-wide, then x2.

    Checked at the largest admissible exponent alpha_0 and at alpha_0/2 for
    every run (two exponents per trajectory).
    """
    cases = []
    for tr in runs:
        kappa = tr.config.kappa
        m_inf = lp_norm(tr.fields[0], np.inf) + tr.force.linf / (c0 * kappa)
        if m_inf == 0.0:
            continue
        alpha0 = min(eps0 * kappa / m_inf, 0.25)
        for alpha in (alpha0, alpha0 / 2.0):
            cases.append((tr, alpha, _holder_series(tr, alpha)))
    lo, hi = 0.05, 64.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        ok = all(_envelope_dominates(tr, a, s, c0, mid) for tr, a, s in cases)
        if ok:
            hi = mid
        else:
            lo = mid
    return 2.0 * hi


def calibrate_eps1(runs: Sequence[Trajectory]) -> float:
    """Largest eps1 with ||theta||_{C^{alpha_*}} <= 2||f||_inf/(eps1 k) on late halves, halved."""

    def holds(eps1: float) -> bool:
        for tr in runs:
            if tr.force.linf == 0.0:
                continue  # claim trivial for zero force
            kappa = tr.config.kappa
            alpha_star = min(eps1 * kappa**2 / tr.force.linf, 0.25)
            bound = 2.0 * tr.force.linf / (eps1 * kappa)
            t_half = tr.times[-1] / 2.0
            for t, fld in zip(tr.times, tr.fields):
                if t < t_half:
                    continue
                norm = lp_norm(fld, np.inf) + holder_seminorm(fld, alpha_star).value
                if norm > bound * (1.0 + 1e-9):
                    return False
        return True

    lo, hi = 1e-4, 8.0
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * lo


def _late_snapshots(tr: Trajectory, every: int = 10) -> Iterable[Tuple[float, SpectralField]]:
    t_half = tr.times[-1] / 2.0
    for i in range(0, len(tr.times), every):
        if tr.times[i] >= t_half:
            yield tr.times[i], tr.fields[i]


def calibrate_c7(runs: Sequence[Trajectory], eps1: float) -> float:
    """Tightest constant of the gradient dissipation lower bound, x2.

    ``D[grad theta](x) >= |grad theta|^{(3-a)/(1-a)} / (c7 [theta]_{C^a}^{1/(1-a)})``
    with ``a = alpha_*`` of each run, measured on late-time snapshots.
    """
    worst = 0.0
    for tr in runs:
        kappa = tr.config.kappa
        a = 0.25 if tr.force.linf == 0.0 else min(eps1 * kappa**2 / tr.force.linf, 0.25)
        expo = (3.0 - a) / (1.0 - a)
        for _t, snap in _late_snapshots(tr, every=25):
            # evolved fields fill the dealias band; upsample for alias-free squares
            fld = resample(snap, 2 * snap.grid.n)
            gx, gy = gradient(fld)
            Dg = dissipation_field(gx, 1.0) + dissipation_field(gy, 1.0)
            gmag = np.sqrt(gx.values() ** 2 + gy.values() ** 2)
            sem = holder_seminorm(snap, a).value
            if sem <= 0.0:
                continue
            mask = gmag > 1e-3 * max(float(gmag.max()), 1e-300)
            need = gmag[mask] ** expo / (np.maximum(Dg[mask], 1e-300) * sem ** (1.0 / (1.0 - a)))
            worst = max(worst, float(need.max()))
    return 2.0 * worst


def _rough_probe_fields(n: int = 64, band: int = 10, seeds=(51, 52, 53, 54)) -> List[SpectralField]:
    from .solver import random_band_field

    grid = TorusGrid(2, n)
    return [random_band_field(grid, band, 1.0, s) for s in seeds]


def calibrate_c8(runs: Sequence[Trajectory], kappa: float = 1.0) -> float:
    """Tightest constant of ``2|grad u||grad theta|^2 <= k/2 D[grad theta] + c8 ...``, x2.

    The two sides scale differently in the field amplitude s (s^3 versus s^2
    and s^{7/2}), so for each shape the worst amplitude is attained at
    ``s* = 3b/a`` and the pointwise tight constant is
    ``(2/3) a^{3/2} / (c sqrt(3 b))`` with ``a = 2|grad u||grad theta|^2``,
    ``b = k D[grad theta]/2``, ``c = ||theta||_inf^{1/2} |grad theta|^3 /
    k^{1/2}`` measured at unit amplitude.  Probed on late-run snapshots plus
    rough synthetic fields.
    """
    worst = 0.0
    shapes: List[SpectralField] = list(_rough_probe_fields())
    for tr in runs:
        for _t, snap in _late_snapshots(tr, every=40):
            shapes.append(resample(snap, 2 * snap.grid.n))
    for fld in shapes:
        linf = lp_norm(fld, np.inf)
        if linf <= 0.0:
            continue
        gx, gy = gradient(fld)
        Dg = dissipation_field(gx, 1.0) + dissipation_field(gy, 1.0)
        u1, u2 = riesz_perp(fld)
        du = [gradient(u1), gradient(u2)]
        gu = np.sqrt(sum(c.values() ** 2 for pair in du for c in pair))
        gmag = np.sqrt(gx.values() ** 2 + gy.values() ** 2)
        mask = (gmag > 1e-3 * max(float(gmag.max()), 1e-300)) & (Dg > 0)
        a = 2.0 * gu[mask] * gmag[mask] ** 2
        b = 0.5 * kappa * Dg[mask]
        c = math.sqrt(linf) * gmag[mask] ** 3 / math.sqrt(kappa)
        need = (2.0 / 3.0) * a**1.5 / (c * np.sqrt(3.0 * b))
        worst = max(worst, float(need.max()))
    return 2.0 * worst


def rough_decay_runs() -> List[Trajectory]:
    """Short unforced runs from steep data; these activate nonlinear H^{3/2} flux."""
    grid = TorusGrid(2, 64)
    out = []
    for seed, amp in ((61, 2.0), (62, 3.0)):
        theta0 = build_field(FieldSpec(kind="random_band", band=10, amplitude=amp, seed=seed), grid)
        cfg = SolverConfig(kappa=1.0, dt=5e-4, t_end=1.0, snapshot_dt=0.01)
        out.append(run(theta0, cfg, build_force(FieldSpec(kind="zero"), grid)))
    return out


def calibrate_c9(runs: Sequence[Trajectory]) -> float:
    """Tightest coefficient of the H^{3/2} differential inequality, x2.

    Measured along trajectories (centered differences of the recorded norms);
    rough-data runs are included because mild corpora may never produce a
    positive excess, in which case the floor 1.0 documents the unconstrained
    direction (larger values only enlarge the envelopes).
    """
    worst = 0.0
    for tr in list(runs) + rough_decay_runs():
        kappa = tr.config.kappa
        f_h1 = tr.force.h1
        t = np.asarray(tr.times)
        h32_sq = np.array([rep.hs[1.5] ** 2 for rep in tr.reports])
        h2_sq = np.array([rep.hs[2.0] ** 2 for rep in tr.reports])
        ddt = (h32_sq[2:] - h32_sq[:-2]) / (t[2:] - t[:-2])
        mid32 = h32_sq[1:-1]
        mid2 = h2_sq[1:-1]
        lhs = ddt + 0.5 * kappa * mid2 - f_h1**2 / kappa
        ok = mid32 > 1e-12
        need = kappa * np.maximum(lhs[ok], 0.0) / mid32[ok] ** 2
        if need.size:
            worst = max(worst, float(need.max()))
    return max(2.0 * worst, 1.0)


def calibrate_c10(runs: Sequence[Trajectory], seeds=(41, 42, 43, 44), kappa: float = 1.0) -> float:
    """Tightest constant of the H^1 quadratic-form bound on the generator, x2.

    The transport part ``T = <xi, A_theta[xi] + k Lambda xi>_{H^1}`` is linear
    in theta while the bound's right side is quadratic, so the worst base
    amplitude ``s* = k ||xi||_{3/2}^2 / T`` yields the amplitude-free tight
    constant ``T^2 / (2 ||xi||_{3/2}^2 ||theta||_{H^2}^2 ||xi||_{H^1}^2)``.
    """
    from .solver import random_band_field

    worst = 0.0
    thetas: List[SpectralField] = list(_rough_probe_fields(seeds=(71, 72)))
    for tr in runs:
        for _t, snap in _late_snapshots(tr, every=40):
            thetas.append(snap)
    for theta in thetas:
        grid = theta.grid
        h2_sq = sobolev_norm(theta, 2.0) ** 2
        if h2_sq <= 1e-14:
            continue
        xis = [random_band_field(grid, b, 1.0, s) for s in seeds for b in (2, 6, 10)]
        for xi in xis:
            q = inner_h1(xi, linearized_rhs(theta, xi, kappa))
            transport = q + kappa * sobolev_norm(xi, 1.5) ** 2
            if transport <= 0.0:
                continue
            need = transport**2 / (
                2.0 * sobolev_norm(xi, 1.5) ** 2 * h2_sq * inner_h1(xi, xi)
            )
            worst = max(worst, float(need))
    return 2.0 * worst


def pair_corpus_runs() -> List[Tuple[Trajectory, Trajectory]]:
    """Five trajectory pairs (same force, nearby data) for the budget monitor."""
    grid = TorusGrid(2, SOLVER_CORPUS_N)
    combos = [
        (SOLVER_DATA[0], SOLVER_FORCES[0]),
        (SOLVER_DATA[1], SOLVER_FORCES[1]),
        (SOLVER_DATA[1], SOLVER_FORCES[2]),
        (SOLVER_DATA[2], SOLVER_FORCES[1]),
        (SOLVER_DATA[2], SOLVER_FORCES[2]),
    ]
    out = []
    for dspec, fspec in combos:
        force = build_force(fspec, grid)
        theta0 = build_field(dspec, grid)
        pert = theta0 * PAIR_PERTURBATION
        cfg = SolverConfig(kappa=1.0, dt=SOLVER_DT, t_end=PAIR_HORIZON, snapshot_dt=0.1)
        out.append((run(theta0, cfg, force), run(theta0 + pert, cfg, force)))
    return out


def calibrate_c_backward(pairs) -> float:
    """Tightest budget constant over the pair corpus and [0, 5] horizon, x2."""
    worst = 0.0
    for t1, t2 in pairs:
        t = np.asarray(t1.times)
        d = np.array([lp_norm(a - b, 2) for a, b in zip(t1.fields, t2.fields)])
        h32 = np.array([sobolev_norm((a + b) * 0.5, 1.5) ** 2 for a, b in zip(t1.fields, t2.fields)])
        if (d <= 1e-14).any():
            continue
        m = float(d.max())
        w = np.log(2.0 * m / d)
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (h32[1:] + h32[:-1]) * np.diff(t))])
        growth = w - w[0]
        ok = integral > 1e-12
        if ok.any():
            worst = max(worst, float((growth[ok] / integral[ok]).max()))
    return 2.0 * worst


@dataclass
class CalibrationReport:
    constants: UniversalConstants
    notes: List[str]


def run_calibration(eps0: float = 0.2, verbose: bool = True) -> CalibrationReport:
    notes = []

    def log(msg):
        notes.append(msg)
        if verbose:
            print(msg, flush=True)

    log("building kernel corpus (20 fields, n=64, band=8) ...")
    fields = kernel_corpus_fields()
    c2 = calibrate_c2(fields)
    log(f"c2 = {c2!r}")

    log("building solver corpus (9 SQG runs + 2 Burgers runs) ...")
    runs = solver_corpus_runs()
    bruns = burgers_corpus_runs()
    all_runs = runs + bruns

    c0 = calibrate_c0(all_runs)
    log(f"c0 = {c0!r}")
    c5 = calibrate_c5(all_runs, eps0, c0)
    log(f"eps0 = {eps0!r} (protocol choice), c5 = {c5!r}")
    eps1 = calibrate_eps1(runs)
    log(f"eps1 = {eps1!r}")
    c7 = calibrate_c7(runs, eps1)
    log(f"c7 = {c7!r}")
    c8 = calibrate_c8(runs)
    log(f"c8 = {c8!r}")
    c9 = calibrate_c9(runs)
    log(f"c9 = {c9!r}")
    c10 = calibrate_c10(runs)
    log(f"c10 = {c10!r}")
    c11 = eigenvalue_count_constant(10**4)
    log(f"c11 = {c11!r} (exact enumeration of the first 10^4 eigenvalues)")

    log("building pair corpus (5 pairs) ...")
    pairs = pair_corpus_runs()
    c_backward = calibrate_c_backward(pairs)
    log(f"c_backward = {c_backward!r}")

    consts = UniversalConstants(
        c0=c0, eps0=eps0, eps1=eps1, c2=c2, c5=c5, c7=c7, c8=c8, c9=c9,
        c10=c10, c11=c11, c_backward=c_backward, version=CONSTANTS_VERSION,
    )
    return CalibrationReport(constants=consts, notes=notes)


def main() -> int:
    report = run_calibration()
    here = os.path.dirname(os.path.abspath(__file__))
    out = os.path.join(here, "data", "default_constants.txt")
    os.makedirs(os.path.dirname(out), exist_ok=True)
    header = (
        "calibrated universal constants\n"
        f"protocol: critsqg.calibration, corpus version {CONSTANTS_VERSION}\n"
        "each value is the corpus-tight constant padded by the documented margin\n"
    )
    save_constants(report.constants, out, header=header)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
