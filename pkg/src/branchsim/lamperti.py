"""Time-change construction of a branching population with competition.

An auxiliary process U runs on an internal clock and solves

    dU = dX - (G(|U|)/U) dt,      U_0 = x > 0,

with X the spectrally positive Levy path of the branching mechanism
(drift -alpha, diffusion sigma, compensated jump atoms).  The population on
the external clock is V_t = U_{C_t}, where C is the inverse of the additive
functional eta_s = int_0^s du/U_u.  V solves (in law) the same SDE as the
competition flow started from x, which makes the terminal values directly
comparable with samples from the flow simulators.

The scheme is explicit Euler on the internal clock; eta accumulates with the
left endpoint, absorption is declared at the first internal step with
U <= u_floor (default 1e-6 * x), and the external path is read off by linear
interpolation of the step function eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigurationError
from .mechanism import BranchingMechanism, CompetitionMechanism, G_eval

__all__ = ["LampertiPath", "simulate_lamperti", "lamperti_terminal_sample"]


@dataclass
class LampertiPath:
    """Internal path, internal clock and the resampled external path."""

    internal_dt: float
    ou_path: np.ndarray  # U on the internal grid
    clock: np.ndarray  # cumulative eta on the internal grid
    times: np.ndarray  # external time grid
    output: np.ndarray  # V on the external grid
    absorption_time: float  # inf if V never hits 0 in the run
    truncated: bool  # internal budget hit before covering the external grid
    meta: dict = field(default_factory=dict)


def _external_from_internal(u, eta, ext_times, absorbed, u_floor):
    """Resample V on ext_times by inverting eta with linear interpolation."""
    v = np.zeros(len(ext_times))
    eta_end = eta[-1]
    for i, t in enumerate(ext_times):
        if t <= 0:
            v[i] = u[0]
            continue
        if t >= eta_end:
            v[i] = 0.0 if absorbed else u[-1]
            continue
        j = int(np.searchsorted(eta, t, side="right")) - 1
        span = eta[j + 1] - eta[j]
        frac = (t - eta[j]) / span if span > 0 else 0.0
        v[i] = u[j] + frac * (u[j + 1] - u[j])
    v[v < u_floor] = np.maximum(v[v < u_floor], 0.0)
    return v


def simulate_lamperti(
    mech: BranchingMechanism,
    comp: CompetitionMechanism | None,
    x: float,
    dt_internal: float,
    t_end: float,
    seed: int,
    *,
    u_floor: float | None = None,
    max_internal_steps: int = 2_000_000,
    ext_dt: float | None = None,
) -> LampertiPath:
    """One path of the time-changed construction.

    Stops at absorption (first internal step with U <= u_floor) or once the
    internal clock covers t_end; if the internal step budget runs out first
    the path is flagged ``truncated``.
    """
    if x <= 0:
        raise ValueError(f"the initial mass must be > 0, got {x}")
    if dt_internal <= 0 or t_end <= 0:
        raise ConfigurationError("dt_internal and t_end must be > 0")
    if u_floor is None:
        u_floor = 1e-6 * x
    h = float(dt_internal)
    gen = rng.generator(seed, rng.LAMPERTI)
    alpha = mech.alpha
    sigma = mech.sigma
    wr = mech.jump_rate_mass
    sq_h = math.sqrt(h)

    u_list = [float(x)]
    eta_list = [0.0]
    u = float(x)
    eta = 0.0
    absorbed = False
    truncated = False
    steps = 0
    while eta < t_end:
        if steps >= max_internal_steps:
            truncated = True
            break
        comp_drag = (G_eval(comp, u) / u) if comp is not None else 0.0
        du = -(alpha + wr) * u * 0.0  # placeholder, see below
        # dX = -alpha dt + sigma dB + (jumps - wr dt); competition drag -G(u)/u dt
        du = (-(alpha + wr) - comp_drag) * h + sigma * sq_h * float(gen.standard_normal())
        for r, w in mech.jump_atoms:
            du += r * float(gen.poisson(w * h))
        eta += h / u
        u = u + du
        steps += 1
        u_list.append(u)
        eta_list.append(eta)
        if u <= u_floor:
            absorbed = True
            break

    u_arr = np.array(u_list)
    eta_arr = np.array(eta_list)
    if ext_dt is None:
        ext_dt = min(t_end / 200.0, max(t_end * h, h))
        ext_dt = t_end / max(1, round(t_end / ext_dt))
    n_ext = round(t_end / ext_dt)
    ext_times = np.arange(n_ext + 1) * ext_dt
    v = _external_from_internal(u_arr, eta_arr, ext_times, absorbed, u_floor)
    absorption_time = float(eta_arr[-1]) if absorbed else math.inf
    if absorbed:
        v[ext_times >= absorption_time] = 0.0
    return LampertiPath(
        internal_dt=h,
        ou_path=u_arr,
        clock=eta_arr,
        times=ext_times,
        output=v,
        absorption_time=absorption_time,
        truncated=truncated,
        meta={"seed": seed, "x": x},
    )


def lamperti_terminal_sample(
    mech: BranchingMechanism,
    comp: CompetitionMechanism | None,
    x: float,
    t_end: float,
    dt_internal: float,
    n: int,
    seed: int,
    *,
    u_floor: float | None = None,
    max_internal_steps: int = 200_000,
) -> np.ndarray:
    """n independent terminal values V_{t_end}, advanced as one vector.

    Replicas exhaust their internal budget before covering t_end only in
    pathological configurations; such replicas raise rather than bias the
    sample.
    """
    if x <= 0:
        raise ValueError(f"the initial mass must be > 0, got {x}")
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if u_floor is None:
        u_floor = 1e-6 * x
    h = float(dt_internal)
    gen = rng.generator(seed, rng.LAMPERTI, rng.BATCH)
    alpha = mech.alpha
    sigma = mech.sigma
    wr = mech.jump_rate_mass
    sq_h = math.sqrt(h)

    u = np.full(n, float(x))
    eta = np.zeros(n)
    v_out = np.full(n, np.nan)
    live = np.ones(n, dtype=bool)  # still needs its terminal value
    for _ in range(max_internal_steps):
        if not live.any():
            break
        drift = -(alpha + wr) * np.ones(n)
        if comp is not None:
            drift = drift - G_eval(comp, np.maximum(u, u_floor)) / np.maximum(u, u_floor)
        xi = gen.standard_normal(n)
        du = drift * h + sigma * sq_h * xi
        for r, w in mech.jump_atoms:
            du = du + r * gen.poisson(w * h, n)
        eta_new = np.where(u > 0, eta + h / np.maximum(u, u_floor), np.inf)
        u_new = u + du
        crossed = live & (eta_new >= t_end)
        if crossed.any():
            frac = (t_end - eta[crossed]) / (eta_new[crossed] - eta[crossed])
            v_out[crossed] = u[crossed] + frac * (u_new[crossed] - u[crossed])
            live[crossed] = False
        dead = live & (u_new <= u_floor)
        if dead.any():
            v_out[dead] = 0.0
            live[dead] = False
        u = np.where(live, u_new, u)
        eta = np.where(live, eta_new, eta)
    if live.any():
        raise ConfigurationError(
            "internal step budget exhausted before the external horizon; "
            "increase max_internal_steps or dt_internal"
        )
    return np.maximum(v_out, 0.0)
