"""Coupled Euler schemes for flows of branching populations with competition.

All flow variants are driven by one :class:`~branchsim.noise.NoiseField` and
share a single step routine.  A run tracks an ordered set of *cuts* (initial
masses); the state is the vector of cut values and the scheme advances the
nonnegative *gaps* between consecutive cuts.  Gap i, sitting on the mass strip
(S_{i-1}, S_i], receives

* drift  -(alpha + c_i) * gap * dt, with c_i the gap's competition rate,
* the sheet integral over its strip (difference of prefix reads, so the reads
  telescope to the exact per-level prefix integral),
* the jump atoms whose mass level falls in its strip, minus the compensator
  sum(w*r) * gap * dt,

and is clipped at zero.  Clipping a gap is coalescence: in the continuum flow
the increment between two initial masses is itself a branching process
absorbed at zero, after which the two levels agree forever.  With this
construction each cut value follows the standard explicit Euler scheme of its
own equation, while monotonicity in the initial mass, domination by a coupled
competition-free run, and the constant-rate reductions of the frozen-rate grid
scheme hold exactly, path by path.

Gap competition rates come in three flavours:

* plain branching:   c_i = 0
* competition:       c_i = average of g over the gap's current strip (exact
  primitive increment of the piecewise-linear rate)
* frozen grid rate:  c_i = g(n*delta) for the population block the gap lives
  in; blocks are re-cut every eps time units from the current population
  profile.  Adjacent blocks with equal frozen rates are tracked as one gap,
  which leaves the scheme's equation unchanged and keeps runs with constant g
  bit-identical to the competition flow.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .mechanism import BranchingMechanism, CompetitionMechanism, g_eval

__all__ = [
    "FlowPath",
    "simulate_csbp_flow",
    "simulate_competition_flow",
    "simulate_grid_flow",
    "simulate_dominated_flow",
]

# gap flavours
_CONST = 0  # fixed competition rate (0.0 for plain branching)
_COMP = 1  # exact piecewise-linear competition
_DOM = 2  # dominating competition-free top gap


@dataclass
class FlowPath:
    """Values of a flow run on the (time step, requested level) grid."""

    times: np.ndarray
    levels: tuple[float, ...]
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    block_records: list | None = None

    def terminal(self) -> np.ndarray:
        return self.values[-1].copy()

    def at_time(self, t: float) -> np.ndarray:
        dt = self.times[1] - self.times[0]
        k = int(round((t - self.times[0]) / dt))
        if not (0 <= k < len(self.times)) or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the recorded grid")
        return self.values[k].copy()


def _check_levels(levels, mass_cap):
    levels = tuple(float(v) for v in levels)
    if len(levels) == 0:
        raise ConfigurationError("at least one level is required")
    if any(v < 0 for v in levels):
        raise ConfigurationError("levels must be >= 0")
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise ConfigurationError("levels must be sorted nondecreasing")
    if levels[-1] > mass_cap * (1 + 1e-12):
        raise ConfigurationError(
            f"level {levels[-1]} exceeds the noise field's mass cap {mass_cap}"
        )
    return levels


def _grid_cuts(level_values, delta, comp, dom_value):
    """Cuts, gap specs, gap block ids and level->cut map for one grid strip.

    Cuts sit at the level values and at block boundaries n*delta (below the
    top level) wherever the frozen rate changes across the boundary; each gap
    carries the frozen rate g(n*delta) of the block it occupies.
    """
    top = level_values[-1]
    if top / delta > 1e6:
        raise ConfigurationError("delta is too small relative to the population size")
    entries = [(v, None) for v in level_values]
    n = 1
    while n * delta < top:
        if g_eval(comp, n * delta) != g_eval(comp, (n - 1) * delta):
            entries.append((n * delta, n))
        n += 1
    entries.sort(key=lambda e: (e[0], e[1] is None))
    cuts: list[float] = []
    boundary_block: list[int | None] = []
    for v, blk in entries:
        if cuts and v == cuts[-1]:
            if blk is not None:
                boundary_block[-1] = blk
            continue
        cuts.append(v)
        boundary_block.append(blk)
    specs: list[tuple] = []
    gap_blocks: list[int] = []
    current_block = 0
    for i in range(len(cuts)):
        specs.append((_CONST, g_eval(comp, current_block * delta)))
        gap_blocks.append(current_block)
        if boundary_block[i] is not None:
            current_block = boundary_block[i]
    out_map = [bisect_left(cuts, v) for v in level_values]
    if dom_value is not None:
        cuts.append(dom_value)
        specs.append((_DOM, 0.0))
        gap_blocks.append(-1)
        out_map.append(len(cuts) - 1)
    return cuts, specs, gap_blocks, out_map


def _run_stack(
    mech: BranchingMechanism,
    noise,
    t_end: float,
    cut_values: list[float],
    gap_specs: list[tuple],
    out_map: list[int],
    n_levels: int,
    has_dom: bool,
    *,
    comp: CompetitionMechanism | None = None,
    grid: tuple | None = None,  # (eps_steps, delta, comp)
    record_blocks: bool = False,
    meta: dict | None = None,
) -> FlowPath:
    n_steps = noise.n_steps(t_end)
    dt = noise.dt
    alpha = mech.alpha
    sigma = mech.sigma
    wr = mech.jump_rate_mass
    has_jumps = bool(mech.jump_atoms)

    n_out = n_levels + (1 if has_dom else 0)
    S = [float(v) for v in cut_values]
    values = np.empty((n_steps + 1, n_out))
    values[0] = [S[j] for j in out_map]
    blocks: list[tuple] = []
    strip_start_totals: dict[int, float] = {}
    gap_blocks: list[int] = [-1] * len(S)
    strip_k0 = 0

    def _block_totals():
        totals: dict[int, float] = {}
        lo = 0.0
        for i, s in enumerate(S):
            if gap_blocks[i] >= 0:
                totals[gap_blocks[i]] = totals.get(gap_blocks[i], 0.0) + (s - lo)
            lo = s
        return totals

    for k in range(n_steps):
        if grid is not None and k % grid[0] == 0:
            if record_blocks and k > 0:
                end_totals = _block_totals()
                for b, v0 in sorted(strip_start_totals.items()):
                    blocks.append((strip_k0, b, v0, end_totals.get(b, 0.0)))
            level_values = [S[j] for j in out_map[:n_levels]]
            dom_value = S[out_map[-1]] if has_dom else None
            S, gap_specs, gap_blocks, out_map = _grid_cuts(
                level_values, grid[1], grid[2], dom_value
            )
            strip_k0 = k
            if record_blocks:
                strip_start_totals = _block_totals()

        m = len(S)
        top = S[-1]
        prefs = [noise.prefix(k, s) for s in S]
        atom_adds = None
        if has_jumps and top > 0.0:
            atoms = noise.atoms_for_step(k, top)
            if atoms:
                atom_adds = [0.0] * m
                for _, nu, r in atoms:
                    gi = bisect_left(S, nu)
                    if gi < m:
                        atom_adds[gi] += r

        s_lo = 0.0
        p_lo = 0.0
        ns_lo = 0.0
        comp_below = 0.0
        new_S = [0.0] * m
        for i in range(m):
            d = S[i] - s_lo
            read = prefs[i] - p_lo
            kind, c = gap_specs[i]
            if kind == _COMP:
                c = comp.mean_rate(s_lo, d)
            if kind == _DOM:
                drift = -(alpha * d) + comp_below
            else:
                drift = -((alpha + c) * d)
                comp_below += c * d
            new_d = d + dt * (drift - wr * d) + sigma * read
            if atom_adds is not None:
                new_d += atom_adds[i]
            if new_d < 0.0:
                new_d = 0.0
            ns = ns_lo + new_d
            new_S[i] = ns
            s_lo = S[i]
            p_lo = prefs[i]
            ns_lo = ns
        if not math.isfinite(new_S[-1]):
            raise NumericalError("flow state became non-finite", step=k)
        S = new_S
        values[k + 1] = [S[j] for j in out_map]

    if grid is not None and record_blocks:
        end_totals = _block_totals()
        for b, v0 in sorted(strip_start_totals.items()):
            blocks.append((strip_k0, b, v0, end_totals.get(b, 0.0)))

    times = np.arange(n_steps + 1) * dt
    path_meta = {"seed": noise.seed, "dt": dt, "du": noise.du}
    if meta:
        path_meta.update(meta)
    return FlowPath(
        times=times,
        levels=tuple(values[0]),
        values=values,
        meta=path_meta,
        block_records=blocks if record_blocks else None,
    )


def simulate_csbp_flow(mech, levels, noise, t_end) -> FlowPath:
    """Flow of competition-free branching processes at the given initial masses."""
    levels = _check_levels(levels, noise.mass_cap)
    return _run_stack(
        mech,
        noise,
        t_end,
        list(levels),
        [(_CONST, 0.0)] * len(levels),
        list(range(len(levels))),
        len(levels),
        False,
        meta={"flavor": "csbp"},
    )


def simulate_competition_flow(mech, comp, levels, noise, t_end) -> FlowPath:
    """Flow with the extra aggregate competition drift -G(Z) dt."""
    levels = _check_levels(levels, noise.mass_cap)
    return _run_stack(
        mech,
        noise,
        t_end,
        list(levels),
        [(_COMP, 0.0)] * len(levels),
        list(range(len(levels))),
        len(levels),
        False,
        comp=comp,
        meta={"flavor": "competition"},
    )


def simulate_grid_flow(
    mech, comp, eps, delta, levels, noise, t_end, *, record_blocks=False
) -> FlowPath:
    """Frozen-rate block approximation of the competition flow.

    Every ``eps`` time units the current population is split into mass blocks
    of width ``delta``; for the next strip each block evolves as a branching
    flow with the constant extra decay rate g(n*delta), reading the shared
    sheet at a mass offset equal to the running total of the blocks below it.
    """
    if eps <= 0 or delta <= 0:
        raise ConfigurationError("eps and delta must be > 0")
    eps_steps = round(eps / noise.dt)
    if eps_steps < 1 or abs(eps_steps * noise.dt - eps) > 1e-9 * max(1.0, eps):
        raise ConfigurationError(f"eps={eps} must be a positive multiple of dt={noise.dt}")
    levels = _check_levels(levels, noise.mass_cap)
    return _run_stack(
        mech,
        noise,
        t_end,
        list(levels),
        [(_CONST, 0.0)] * len(levels),
        list(range(len(levels))),
        len(levels),
        False,
        grid=(eps_steps, float(delta), comp),
        record_blocks=record_blocks,
        meta={"flavor": "grid", "eps": eps, "delta": delta},
    )


def simulate_dominated_flow(
    mech,
    levels,
    w_level,
    noise,
    t_end,
    *,
    comp: CompetitionMechanism | None = None,
    grid: tuple[float, float] | None = None,
) -> FlowPath:
    """A flow at ``levels`` coupled under a competition-free run from ``w_level``.

    The last column of the result is a plain branching flow started from
    ``w_level`` and driven by the same noise; by construction it dominates
    every lower column at every step.  ``comp`` selects the competition flow
    for the lower columns, ``grid=(eps, delta)`` its frozen-rate version, and
    neither gives the plain flow.  Returned levels are ``levels + (w_level,)``.
    """
    levels = _check_levels(levels, noise.mass_cap)
    w_level = float(w_level)
    if w_level < levels[-1]:
        raise ConfigurationError("the dominating level must be >= every tracked level")
    if w_level > noise.mass_cap * (1 + 1e-12):
        raise ConfigurationError("the dominating level exceeds the noise mass cap")
    if grid is not None:
        if comp is None:
            raise ConfigurationError("a grid run needs a competition mechanism")
        eps, delta = grid
        eps_steps = round(eps / noise.dt)
        if eps_steps < 1 or abs(eps_steps * noise.dt - eps) > 1e-9 * max(1.0, eps):
            raise ConfigurationError(f"eps={eps} must be a positive multiple of dt={noise.dt}")
        return _run_stack(
            mech,
            noise,
            t_end,
            list(levels) + [w_level],
            [(_CONST, 0.0)] * len(levels) + [(_DOM, 0.0)],
            list(range(len(levels) + 1)),
            len(levels),
            True,
            grid=(eps_steps, float(delta), comp),
            meta={"flavor": "grid+dominator", "eps": eps, "delta": delta},
        )
    kind = _COMP if comp is not None else _CONST
    return _run_stack(
        mech,
        noise,
        t_end,
        list(levels) + [w_level],
        [(kind, 0.0)] * len(levels) + [(_DOM, 0.0)],
        list(range(len(levels) + 1)),
        len(levels),
        True,
        comp=comp,
        meta={"flavor": ("competition" if comp else "csbp") + "+dominator"},
    )
