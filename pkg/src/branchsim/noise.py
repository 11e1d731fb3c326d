"""A shared, regenerable discretisation of space-time driving noise.

The Gaussian sheet W(ds, du) on [0, horizon] x [0, inf) is realised as i.i.d.
N(0, dt*du) cell values indexed by (time cell k, mass cell j).  The integral
of W over [0, z] at time cell k is read through :meth:`NoiseField.prefix`:
all whole cells below z plus the partial cell scaled by sqrt(fraction), which
preserves the variance z*dt exactly.  Jump noise is a Poisson cloud of atoms
(time, mass level nu) per jump size, with area intensity w_i.

Everything is generated lazily in (time cell, mass band) tiles, and each tile
is a pure function of (seed, tile coordinates): regeneration after a cache
drop is bit-exact, and several simulators can share one field to obtain
pathwise-coupled runs.  Mass bands extend above ``mass_cap`` on demand, so
paths may diffuse above the configured cap; only *initial* levels are checked
against it.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from . import rng
from .errors import ConfigurationError

_ATOM_BLOCK = 256  # time cells per atom tile


class NoiseField:
    """Deterministic lazily-tiled white-noise sheet plus Poisson jump atoms."""

    def __init__(
        self,
        dt: float,
        du: float,
        horizon_t: float,
        seed: int,
        mass_cap: float = 4.0,
        jumps: Iterable[tuple[float, float]] = (),
    ):
        if dt <= 0 or du <= 0 or horizon_t <= 0:
            raise ConfigurationError("dt, du and horizon_t must all be > 0")
        if mass_cap <= 0:
            raise ConfigurationError("mass_cap must be > 0")
        self.dt = float(dt)
        self.du = float(du)
        self.horizon_t = float(horizon_t)
        self.seed = int(seed)
        self.jumps = tuple((float(r), float(w)) for r, w in jumps)
        # band height is a whole number of cells covering mass_cap
        self.cells_per_band = max(1, int(math.ceil(mass_cap / du - 1e-9)))
        self.band_height = self.cells_per_band * self.du
        self.mass_cap = float(mass_cap)
        self._cell_sd = math.sqrt(self.dt * self.du)
        self._rows: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        self._atom_tiles: dict[tuple[int, int], list[list[tuple[float, float, float]]]] = {}

    # -- Gaussian sheet ----------------------------------------------------

    def _row(self, k: int, band: int) -> tuple[np.ndarray, np.ndarray]:
        key = (k, band)
        row = self._rows.get(key)
        if row is None:
            gen = rng.generator(self.seed, rng.SHEET, k, band)
            cells = gen.normal(0.0, self._cell_sd, self.cells_per_band)
            cum = np.concatenate(([0.0], np.cumsum(cells)))
            row = (cells, cum)
            self._rows[key] = row
        return row

    def prefix(self, k: int, z: float) -> float:
        """Integral of the sheet row k over mass [0, z] (sqrt-scaled last cell)."""
        if z <= 0.0:
            return 0.0
        band = int(z / self.band_height)
        rem = z - band * self.band_height
        total = 0.0
        for b in range(band):
            total += float(self._row(k, b)[1][-1])
        if rem <= 0.0:
            return total
        cells, cum = self._row(k, band)
        j = int(rem / self.du)
        if j >= self.cells_per_band:
            return total + float(cum[-1])
        frac = (rem - j * self.du) / self.du
        return total + float(cum[j]) + math.sqrt(frac) * float(cells[j])

    # -- jump atoms ----------------------------------------------------------

    def _atom_tile(self, block: int, band: int) -> list[list[tuple[float, float, float]]]:
        """Atoms for time cells [block*B, (block+1)*B), one list per cell.

        Each atom is (time, nu, r) with nu in the band's absolute mass range.
        Atoms of distinct sizes never share a timestamp; in the (measure-zero)
        event of a float tie the tile is redrawn with a bumped salt.
        """
        key = (block, band)
        tile = self._atom_tiles.get(key)
        if tile is not None:
            return tile
        base = band * self.band_height
        n_cells = _ATOM_BLOCK
        for salt in range(64):
            tile = [[] for _ in range(n_cells)]
            times_seen: set[float] = set()
            clash = False
            for i, (r, w) in enumerate(self.jumps):
                gen = rng.generator(self.seed, rng.ATOMS, block, band, i, salt)
                counts = gen.poisson(w * self.dt * self.band_height, n_cells)
                total = int(counts.sum())
                if total == 0:
                    continue
                u_time = gen.random(total)
                u_mass = gen.random(total)
                idx = np.repeat(np.arange(n_cells), counts)
                times = (block * n_cells + idx + u_time) * self.dt
                nus = base + u_mass * self.band_height
                for c, t, nu in zip(idx, times, nus):
                    t = float(t)
                    if t in times_seen:
                        clash = True
                        break
                    times_seen.add(t)
                    tile[int(c)].append((t, float(nu), r))
                if clash:
                    break
            if not clash:
                break
        for cell in tile:
            cell.sort()
        self._atom_tiles[key] = tile
        return tile

    def atoms_for_step(self, k: int, z_max: float) -> list[tuple[float, float, float]]:
        """Atoms (time, nu, r) in time cell k with mass level nu <= z_max."""
        if not self.jumps or z_max <= 0.0:
            return []
        block, cell = divmod(k, _ATOM_BLOCK)
        top_band = int(z_max / self.band_height)
        out: list[tuple[float, float, float]] = []
        for b in range(top_band + 1):
            for t, nu, r in self._atom_tile(block, b)[cell]:
                if nu <= z_max:
                    out.append((t, nu, r))
        out.sort()
        return out

    # -- views / bookkeeping -------------------------------------------------

    def shifted(self, step_offset: int) -> "ShiftedNoiseField":
        """Time-shifted view reading this field from cell ``step_offset`` on."""
        return ShiftedNoiseField(self, step_offset)

    def clear_cache(self):
        self._rows.clear()
        self._atom_tiles.clear()

    def n_steps(self, t_end: float) -> int:
        n = round(t_end / self.dt)
        if abs(n * self.dt - t_end) > 1e-9 * max(1.0, t_end) or n < 1:
            raise ConfigurationError(
                f"t_end={t_end} is not a positive multiple of dt={self.dt}"
            )
        if n * self.dt > self.horizon_t * (1 + 1e-12):
            raise ConfigurationError(f"t_end={t_end} exceeds horizon {self.horizon_t}")
        return n


class ShiftedNoiseField:
    """Read-through view of a :class:`NoiseField` with shifted time origin."""

    def __init__(self, base: NoiseField, step_offset: int):
        if step_offset < 0:
            raise ConfigurationError("step_offset must be >= 0")
        self._base = base
        self._offset = int(step_offset)
        self.dt = base.dt
        self.du = base.du
        self.mass_cap = base.mass_cap
        self.jumps = base.jumps
        self.seed = base.seed
        self.horizon_t = base.horizon_t - step_offset * base.dt

    def prefix(self, k: int, z: float) -> float:
        return self._base.prefix(k + self._offset, z)

    def atoms_for_step(self, k: int, z_max: float):
        return self._base.atoms_for_step(k + self._offset, z_max)

    def shifted(self, step_offset: int) -> "ShiftedNoiseField":
        return ShiftedNoiseField(self._base, self._offset + step_offset)

    def n_steps(self, t_end: float) -> int:
        n = round(t_end / self.dt)
        if abs(n * self.dt - t_end) > 1e-9 * max(1.0, t_end) or n < 1:
            raise ConfigurationError(
                f"t_end={t_end} is not a positive multiple of dt={self.dt}"
            )
        if n * self.dt > self.horizon_t * (1 + 1e-12):
            raise ConfigurationError(f"t_end={t_end} exceeds the shifted horizon")
        return n


def noise_for_mechanism(
    mech,
    dt: float,
    horizon_t: float,
    seed: int,
    mass_cap: float,
    du: float | None = None,
) -> NoiseField:
    """Field with the mechanism's jump atoms; default du = 1e-3 * mass_cap."""
    if du is None:
        du = 1e-3 * mass_cap
    return NoiseField(
        dt=dt,
        du=du,
        horizon_t=horizon_t,
        seed=seed,
        mass_cap=mass_cap,
        jumps=mech.jump_atoms,
    )
