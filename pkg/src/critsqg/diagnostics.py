"""Envelopes, absorbing-ball constants, and trajectory-level verification probes.

Closed forms implemented here (kappa the dissipation coefficient, f the force):

* L^p decay envelope:
  ``||theta(t)||_p <= ||theta_0||_p e^{-t c0 k} + ||f||_p/(c0 k) (1 - e^{-t c0 k})``
* Hoelder budget:  ``M_inf = ||theta_0||_inf + ||f||_inf/(c0 k)`` and
  ``alpha_0 = min{eps0 k / M_inf, 1/4}``
* Hoelder envelope ODE:
  ``d/dt M^2 + (k/(c5 M_inf)) M^3 = c5^2 k M_inf^2``, ``M(0) = [theta_0]_{C^a}``,
  with the a-priori cap ``max{M(0), c5 M_inf}``, the long-time cap
  ``2 c5 M_inf`` valid for ``t >= t_alpha``, and
  ``t_alpha = 0`` if ``M(0) <= 2 c5 M_inf`` else
  ``(M(0)^2/(4 c5^2 M_inf^2) - 1)/(7 k)``
* absorbing constants:
  ``alpha_* = min{eps1 k^2/||f||_inf, 1/4}``, ``M_{inf,f} = 2||f||_inf/(eps1 k)``,
  ``M_{1,f}^2  = 72/k^2 ||f||_{H^1}^2
                 + c8 (8 c7)^{(3-3a)/(2a)} / (3 k^{(9-3a)/(4a)}) M_{inf,f}^{(9-a)/(4a)}``
  with ``a = alpha_*``,
  ``M_{3/2,f}^2 = ((6+k)/k M_{1,f}^2 + ||f||_{H^1}^2/k) exp(c9 (6+k) M_{1,f}^2 / k^2)``,
  ``M_{2,f}^2  = 2/k^2 ||f||_{H^1}^2 + 2 c9 / k^2 M_{3/2,f}^4``
* uniform Groenwall bound: ``x(t) <= (X/r + B) e^A`` for ``t >= t0 + r``
* backward-uniqueness log-convexity budget:
  ``w(t) = log(2m/||theta^(1)-theta^(2)||_{L^2}) <= w(0) + C int ||avg||_{H^{3/2}}^2``

The universal constants (c0, eps0, eps1, c2, c5, c7..c11, the budget constant)
are calibration parameters: each is pinned in a versioned key=value file
produced by the documented protocol in :mod:`critsqg.calibration` and loadable
via the ``SQG_CONSTANTS`` environment variable.  Every envelope function here
is pure: replayable from recorded norms alone.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields as dc_fields
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .spectral import SpectralField, holder_seminorm, lp_norm, sobolev_norm
from .solver import Trajectory

__all__ = [
    "UniversalConstants",
    "load_constants",
    "save_constants",
    "default_constants_path",
    "AbsorbingConstants",
    "decay_envelope",
    "holder_budget",
    "t_alpha_formula",
    "EnvelopeSolution",
    "m_alpha_envelope",
    "HolderTrackResult",
    "track_holder",
    "absorbing_constants",
    "uniform_gronwall",
    "LogConvexityResult",
    "log_convexity_monitor",
]


@dataclass(frozen=True)
class UniversalConstants:
    """Calibrated universal constants; see data/default_constants.txt for provenance."""

    c0: float
    eps0: float
    eps1: float
    c2: float
    c5: float
    c7: float
    c8: float
    c9: float
    c10: float
    c11: float
    c_backward: float
    version: str = "unversioned"


def default_constants_path() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(here, "data", "default_constants.txt")


def load_constants(path: Optional[str] = None) -> UniversalConstants:
    """Load the calibrated constants file (key=value, '#' comments).

    Resolution order: explicit ``path`` argument, then the ``SQG_CONSTANTS``
    environment variable, then the packaged defaults.
    """
    if path is None:
        path = os.environ.get("SQG_CONSTANTS") or default_constants_path()
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed constants line: {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
    kwargs = {}
    for f in dc_fields(UniversalConstants):
        if f.name not in values:
            raise ValueError(f"constants file {path} missing key {f.name!r}")
        kwargs[f.name] = values[f.name] if f.name == "version" else float(values[f.name])
    return UniversalConstants(**kwargs)


def save_constants(consts: UniversalConstants, path: str, header: str = "") -> None:
    lines = []
    if header:
        lines.extend("# " + h for h in header.splitlines())
    for f in dc_fields(UniversalConstants):
        v = getattr(consts, f.name)
        lines.append(f"{f.name} = {v!r}" if f.name != "version" else f"version = {v}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def decay_envelope(p, t, theta0_norm: float, f_norm: float, kappa: float, c0: float):
    """L^p decay envelope value at time(s) t; p only validates the usage."""
    if p != np.inf and p != "inf":
        p = int(p)
        if p < 2 or p % 2 != 0:
            raise ValueError("p must be an even integer >= 2 or inf")
    t = np.asarray(t, dtype=np.float64)
    decay = np.exp(-t * c0 * kappa)
    return theta0_norm * decay + f_norm / (c0 * kappa) * (1.0 - decay)


def holder_budget(theta0: SpectralField, f: SpectralField, kappa: float, consts: UniversalConstants):
    """``(alpha_0, M_inf)`` admissible-exponent budget from data and force norms."""
    m_inf = lp_norm(theta0, np.inf) + lp_norm(f, np.inf) / (consts.c0 * kappa)
    if m_inf == 0.0:
        return 0.25, 0.0
    alpha0 = min(consts.eps0 * kappa / m_inf, 0.25)
    return alpha0, m_inf


def t_alpha_formula(M0: float, M_inf: float, kappa: float, c5: float) -> float:
    """Time after which the Hoelder envelope obeys the long-time cap 2*c5*M_inf."""
    if M_inf == 0.0:
        return 0.0
    if M0 <= 2.0 * c5 * M_inf:
        return 0.0
    return (M0**2 / (4.0 * c5**2 * M_inf**2) - 1.0) / (7.0 * kappa)


@dataclass
class EnvelopeSolution:
    """Sampled Hoelder-envelope ODE solution with its closed-form caps."""

    t: np.ndarray
    m_alpha: np.ndarray
    cap: float            # max{M(0), c5*M_inf}, valid for all t
    longtime_cap: float   # 2*c5*M_inf, valid for t >= t_alpha
    t_alpha: float


def m_alpha_envelope(M0: float, M_inf: float, kappa: float, c5: float, t_grid) -> EnvelopeSolution:
    """Integrate the envelope ODE for ``y = M^2`` with an adaptive RK scheme.

    ``M_inf = 0`` degenerates to the constant solution (zero data and force).
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if M0 < 0 or M_inf < 0:
        raise ValueError("M0 and M_inf must be nonnegative")
    if M_inf == 0.0:
        m = np.full_like(t_grid, M0)
        return EnvelopeSolution(t_grid, m, M0, 0.0, 0.0)

    source = c5**2 * kappa * M_inf**2
    damp = kappa / (c5 * M_inf)

    def rhs(_t, y):
        return source - damp * np.maximum(y, 0.0) ** 1.5

    sol = solve_ivp(
        rhs, (float(t_grid[0]), float(t_grid[-1]) if t_grid[-1] > t_grid[0] else float(t_grid[0]) + 1e-12),
        [M0**2], t_eval=t_grid, rtol=1e-10, atol=1e-12, method="RK45",
    )
    if not sol.success:
        raise RuntimeError(f"envelope ODE integration failed: {sol.message}")
    m = np.sqrt(np.maximum(sol.y[0], 0.0))
    return EnvelopeSolution(
        t=t_grid,
        m_alpha=m,
        cap=max(M0, c5 * M_inf),
        longtime_cap=2.0 * c5 * M_inf,
        t_alpha=t_alpha_formula(M0, M_inf, kappa, c5),
    )


@dataclass
class FalsificationEvent:
    t: float
    g: float
    envelope_sq: float
    field: SpectralField


@dataclass
class HolderTrackResult:
    """Per-snapshot running sup g(t) = sup_{x,h} v^2 against the envelope."""

    alpha: float
    t: np.ndarray
    g: np.ndarray
    argmax_x: list
    argmax_h: list
    envelope_sq: np.ndarray
    events: list

    @property
    def falsification_count(self) -> int:
        return len(self.events)


def track_holder(traj: Trajectory, alpha: float, consts: UniversalConstants,
                 rel_slack: float = 1e-9) -> HolderTrackResult:
    """Track ``g(t) = (sup_{x,h} |delta_h theta|/|h|^alpha)^2`` along a trajectory.

    Verifies ``g(t) <= M_alpha(t)^2`` against the envelope ODE seeded from the
    initial data; a violation is recorded as a falsification event carrying
    the offending state, never raised.  Callers owe snapshots dense enough to
    pin the running sup (cadence at most ten time steps; the shipped presets
    comply).
    """
    kappa = traj.config.kappa
    theta0 = traj.fields[0]
    m0 = holder_seminorm(theta0, alpha).value
    m_inf = lp_norm(theta0, np.inf) + traj.force.linf / (consts.c0 * kappa)
    t = np.asarray(traj.times)
    env = m_alpha_envelope(m0, m_inf, kappa, consts.c5, t)
    g = np.empty(len(traj.fields))
    ax, ah = [], []
    events = []
    for i, fld in enumerate(traj.fields):
        hm = holder_seminorm(fld, alpha)
        g[i] = hm.value**2
        ax.append(hm.argmax_x)
        ah.append(hm.argmax_h)
        bound = env.m_alpha[i] ** 2
        if g[i] > bound * (1.0 + rel_slack) + 1e-300:
            events.append(FalsificationEvent(t=float(t[i]), g=float(g[i]), envelope_sq=float(bound), field=fld))
    return HolderTrackResult(
        alpha=alpha, t=t, g=g, argmax_x=ax, argmax_h=ah,
        envelope_sq=env.m_alpha**2, events=events,
    )


@dataclass(frozen=True)
class AbsorbingConstants:
    alpha_star: float
    m_inf_f: float
    m_1f: float
    m_32f: float
    m_2f: float


@dataclass(frozen=True)
class EnvelopeSet:
    """Every envelope quantity of one problem (theta0, f, kappa) in one bundle."""

    constants: "UniversalConstants"
    kappa: float
    m_p: dict            # p -> ||theta0||_p + ||f||_p/(c0 kappa)
    m_inf: float
    alpha0: float
    alpha_star: float
    m_inf_f: float
    m_1f: float
    m_32f: float
    m_2f: float
    t_alpha: float


def envelope_set(theta0: SpectralField, f: SpectralField, kappa: float,
                 consts: UniversalConstants, alpha: Optional[float] = None,
                 ps=(2, 4)) -> EnvelopeSet:
    """Evaluate the full envelope bundle for one initial condition and force."""
    alpha0, m_inf = holder_budget(theta0, f, kappa, consts)
    a = alpha if alpha is not None else alpha0
    m0 = holder_seminorm(theta0, a).value if m_inf > 0 else 0.0
    ac = absorbing_constants(lp_norm(f, np.inf), sobolev_norm(f, 1.0), kappa, consts)
    m_p = {p: lp_norm(theta0, p) + lp_norm(f, p) / (consts.c0 * kappa) for p in ps}
    m_p["inf"] = m_inf
    return EnvelopeSet(
        constants=consts, kappa=kappa, m_p=m_p, m_inf=m_inf, alpha0=alpha0,
        alpha_star=ac.alpha_star, m_inf_f=ac.m_inf_f, m_1f=ac.m_1f,
        m_32f=ac.m_32f, m_2f=ac.m_2f,
        t_alpha=t_alpha_formula(m0, m_inf, kappa, consts.c5),
    )


def absorbing_constants(f_linf: float, f_h1: float, kappa: float, consts: UniversalConstants) -> AbsorbingConstants:
    """Closed-form absorbing-ball radii, evaluated exactly as printed.

    The exponents blow up as alpha_* -> 0; for strong forces the radii are
    astronomically large and only the inequality direction is testable.
    """
    if not (math.isfinite(f_linf) and math.isfinite(f_h1)):
        raise ValueError("force norms must be finite (alpha_* = 0 is out of domain)")
    if f_linf < 0 or f_h1 < 0:
        raise ValueError("norms must be nonnegative")
    if f_linf == 0.0:
        alpha_star = 0.25
        m_inf_f = 0.0
    else:
        alpha_star = min(consts.eps1 * kappa**2 / f_linf, 0.25)
        m_inf_f = 2.0 * f_linf / (consts.eps1 * kappa)
    a = alpha_star
    m1_sq = 72.0 / kappa**2 * f_h1**2
    m1_sq += (
        consts.c8
        * (8.0 * consts.c7) ** ((3.0 - 3.0 * a) / (2.0 * a))
        / (3.0 * kappa ** ((9.0 - 3.0 * a) / (4.0 * a)))
        * m_inf_f ** ((9.0 - a) / (4.0 * a))
    )
    # the exponential overflows float range already for moderate forces
    # (the envelopes are astronomically large there); saturate to inf
    if m1_sq > 0.0 or f_h1 > 0.0:
        log_m32_sq = math.log((6.0 + kappa) / kappa * m1_sq + f_h1**2 / kappa) + (
            consts.c9 * (6.0 + kappa) * m1_sq / kappa**2
        )
        m32_sq = math.exp(log_m32_sq) if log_m32_sq < 700.0 else math.inf
    else:
        m32_sq = 0.0
    m2_sq = 2.0 / kappa**2 * f_h1**2 + 2.0 * consts.c9 / kappa**2 * m32_sq**2
    return AbsorbingConstants(
        alpha_star=alpha_star,
        m_inf_f=m_inf_f,
        m_1f=math.sqrt(m1_sq),
        m_32f=math.sqrt(m32_sq),
        m_2f=math.sqrt(m2_sq),
    )


def uniform_gronwall(X: float, A: float, B: float, r: float) -> float:
    """Pointwise bound ``(X/r + B) e^A`` from window-integral data."""
    if r <= 0:
        raise ValueError("window length r must be positive")
    if min(X, A, B) < 0:
        raise ValueError("X, A, B must be nonnegative")
    return (X / r + B) * math.exp(A)


@dataclass
class DecayEnvelopeReport:
    """Rows (t, norm, envelope, slack, violated) for one exponent p."""

    p: object
    rows: list
    violations: int


def decay_envelope_report(traj: Trajectory, p, consts: UniversalConstants,
                          rel_slack: float = 1e-9) -> DecayEnvelopeReport:
    """Compare recorded L^p norms of a trajectory against the decay envelope."""
    kappa = traj.config.kappa
    theta0_norm = lp_norm(traj.fields[0], p)
    f_norm = lp_norm(traj.force.field, p)
    rows = []
    violations = 0
    for t, rep in zip(traj.times, traj.reports):
        if p == np.inf or p == "inf":
            norm = rep.linf
        elif int(p) == 2:
            norm = rep.l2
        else:
            norm = rep.lp.get(int(p))
            if norm is None:
                norm = lp_norm(traj.field_at(t), p)
        env = float(decay_envelope(p, t, theta0_norm, f_norm, kappa, consts.c0))
        violated = norm > env * (1.0 + rel_slack) + 1e-300
        violations += int(violated)
        rows.append((t, norm, env, env - norm, violated))
    return DecayEnvelopeReport(p=p, rows=rows, violations=violations)


@dataclass
class AbsorptionReport:
    """H^1 absorbing-ball entry/permanence and H^{3/2} window averages."""

    m_1f: float
    entry_time: float            # first snapshot inside the ball (inf if never)
    permanent: bool              # stays inside from entry to the horizon end
    window_rows: list            # (t_start, avg_h32_sq, budget, violated)
    window_violations: int
    rows: list                   # (t, h1, m_1f, inside)


def absorption_report(traj: Trajectory, consts: UniversalConstants) -> AbsorptionReport:
    """Check entry into the H^1 ball of radius M_{1,f} and the H^{3/2} window bound.

    Window averages ``int_t^{t+1} ||theta||_{H^{3/2}}^2`` are compared against
    ``(6+kappa)/kappa * M_{1,f}^2`` for unit windows starting at or after the
    empirical entry time.
    """
    kappa = traj.config.kappa
    ac = absorbing_constants(traj.force.linf, traj.force.h1, kappa, consts)
    t = np.asarray(traj.times)
    h1 = np.array([rep.hs[1.0] for rep in traj.reports])
    h32_sq = np.array([rep.hs[1.5] ** 2 for rep in traj.reports])
    inside = h1 <= ac.m_1f
    rows = [(float(tt), float(v), ac.m_1f, bool(i)) for tt, v, i in zip(t, h1, inside)]
    idx = np.nonzero(inside)[0]
    if len(idx) == 0:
        return AbsorptionReport(m_1f=ac.m_1f, entry_time=math.inf, permanent=False,
                                window_rows=[], window_violations=0, rows=rows)
    entry = int(idx[0])
    permanent = bool(inside[entry:].all())
    budget = (6.0 + kappa) / kappa * ac.m_1f**2
    window_rows = []
    violations = 0
    for i in range(entry, len(t)):
        j = np.searchsorted(t, t[i] + 1.0)
        if j >= len(t) or t[j] < t[i] + 1.0 - 1e-9:
            break
        avg = float(np.trapezoid(h32_sq[i : j + 1], t[i : j + 1]))
        violated = avg > budget * (1.0 + 1e-9)
        violations += int(violated)
        window_rows.append((float(t[i]), avg, budget, violated))
    return AbsorptionReport(m_1f=ac.m_1f, entry_time=float(t[entry]), permanent=permanent,
                            window_rows=window_rows, window_violations=violations, rows=rows)


@dataclass
class LogConvexityResult:
    """Backward-uniqueness monitor ``w(t) = log(2m/||diff||_{L^2})`` vs its budget."""

    t: np.ndarray
    w: np.ndarray
    budget: np.ndarray
    violations: int
    status: str  # "ok" | "indistinguishable"


def log_convexity_monitor(traj1: Trajectory, traj2: Trajectory, C: float,
                          rel_slack: float = 1e-9) -> LogConvexityResult:
    """Monitor the log-convexity budget on a pair of trajectories under one force.

    ``m`` is the running max of the difference L^2 norm over the window; the
    budget integrates the H^{3/2} norm of the average solution.  Pairs whose
    difference collapses to numerical zero terminate with status
    ``indistinguishable`` (degenerate-input contract, no crash).
    """
    if list(traj1.times) != list(traj2.times):
        raise ValueError("trajectory pair must share snapshot times")
    t = np.asarray(traj1.times)
    d = np.empty(len(t))
    h32_avg_sq = np.empty(len(t))
    scale = 0.0
    for i, (f1, f2) in enumerate(zip(traj1.fields, traj2.fields)):
        diff = f1 - f2
        avg = (f1 + f2) * 0.5
        d[i] = lp_norm(diff, 2)
        h32_avg_sq[i] = sobolev_norm(avg, 1.5) ** 2
        scale = max(scale, lp_norm(f1, 2), lp_norm(f2, 2))
    floor = 1e4 * np.finfo(float).eps * max(scale, 1.0)
    alive = d > floor
    if not alive.any():
        return LogConvexityResult(t=t, w=np.array([]), budget=np.array([]), violations=0,
                                  status="indistinguishable")
    last = int(np.nonzero(alive)[0][-1])
    keep = slice(0, last + 1)
    t_k = t[keep]
    d_k = d[keep]
    if (d_k <= floor).any():
        # difference collapsed mid-window; monitor up to the collapse
        first_dead = int(np.nonzero(d_k <= floor)[0][0])
        t_k, d_k = t_k[:first_dead], d_k[:first_dead]
        h32 = h32_avg_sq[:first_dead]
        status = "indistinguishable"
    else:
        h32 = h32_avg_sq[keep]
        status = "ok"
    if len(t_k) == 0:
        return LogConvexityResult(t=t, w=np.array([]), budget=np.array([]), violations=0,
                                  status="indistinguishable")
    m = float(d_k.max())
    w = np.log(2.0 * m / d_k)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (h32[1:] + h32[:-1]) * np.diff(t_k))])
    budget = w[0] + C * integral
    violations = int(np.sum(w > budget * (1.0 + rel_slack) + 1e-12))
    return LogConvexityResult(t=t_k, w=w, budget=budget, violations=violations, status=status)
