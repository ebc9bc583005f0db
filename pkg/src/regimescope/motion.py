"""First-order stochastic soft-core particle model with run-and-tumble propulsion.

Particles live in a periodic square box of side ``L``.  Each step moves
particle ``i`` by ``dt * (beta * P_i + alpha * sum_j F(r_j - r_i))`` where
``P_i`` is a unit heading that is redrawn uniformly every ``tumble_period``
steps (with a per-particle offset) and ``F`` is a short-ranged soft-core
force: repulsive below :func:`core_radius`, attractive out to ``l_max`` and
zero beyond.

The force magnitude is

    g(d) = exp(-d / l_attract) / (4 * l_attract) - exp(-d / l_repel) / l_repel

with ``g > 0`` meaning repulsion.  Its zero is exactly
``core_radius(l_attract, l_repel)``; with the default lengths
(``l_attract=1/2``, ``l_repel=14``) that is ``1.009``.

Randomness is split by key so results never depend on iteration order:

* initial positions, headings and tumble offsets come from
  ``SeedSequence(seed, spawn_key=(0,))``;
* the heading drawn by particle ``k`` at its ``j``-th tumble comes from
  ``SeedSequence(seed, spawn_key=(1, k, j))``.

This makes :func:`step` a pure function of ``(state, step_index, cfg)``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

CLUSTERED = "clustered"
DISORDERED = "disordered"
BRANCHED = "branched-clustered"


@dataclass(frozen=True)
class SimConfig:
    num_particles: int = 200
    box_side: float = 20.0
    dt: float = 0.02
    num_steps: int = 50000
    alpha: float = 0.24
    beta: float = 0.009
    l_attract: float = 0.5
    l_repel: float = 14.0
    l_max: float = 1.5
    tumble_period: int = 2500
    seed: int = 0
    snapshot_stride: int = 50
    neighbor_method: str = "auto"

    def __post_init__(self):
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        for name in ("box_side", "dt", "l_attract", "l_repel", "l_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.num_steps < 0:
            raise ValueError("num_steps must be >= 0")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.tumble_period < 1:
            raise ValueError("tumble_period must be >= 1")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.neighbor_method not in ("auto", "brute", "cells"):
            raise ValueError("neighbor_method must be one of auto, brute, cells")

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ParticleState:
    """Positions ``(K, 2)`` in ``[0, L)``, heading angles and tumble offsets."""

    positions: np.ndarray
    headings: np.ndarray
    tumble_offsets: np.ndarray

    @property
    def num_particles(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class Snapshot:
    time_index: int
    positions: np.ndarray
    interacting: np.ndarray = field(repr=False)


def core_radius(l_attract: float, l_repel: float) -> float:
    """Distance at which the pairwise force changes sign.

    >>> round(core_radius(0.5, 14.0), 3)
    1.009
    """
    if not (l_attract > 0 and l_repel > 0):
        raise ValueError("lengths must be positive")
    if l_attract == l_repel:
        raise ValueError("l_attract and l_repel must differ")
    r0 = l_attract * l_repel / (l_attract - l_repel) * math.log(4.0 * l_attract / l_repel)
    if not r0 > 0:
        raise ValueError(
            f"core radius is non-positive ({r0:g}) for l_attract={l_attract}, l_repel={l_repel}"
        )
    return r0


def force_magnitude(distance, l_attract: float, l_repel: float):
    """Signed force magnitude; positive repels.  No cutoff applied."""
    d = np.asarray(distance, dtype=float)
    g = np.exp(-d / l_attract) / (4.0 * l_attract) - np.exp(-d / l_repel) / l_repel
    return g if g.ndim else float(g)


def minimum_image(delta, box_side: float):
    """Wrap displacement components into ``[-L/2, L/2)``."""
    half = 0.5 * box_side
    return np.mod(np.asarray(delta, dtype=float) + half, box_side) - half


def pairwise_force(displacement, cfg: SimConfig) -> np.ndarray:
    """Force on particle ``i`` from ``j`` given ``displacement = r_j - r_i``.

    Returns the zero vector beyond ``l_max`` and at zero distance.
    """
    v = np.asarray(displacement, dtype=float)
    d = math.hypot(v[0], v[1])
    if d == 0.0 or d > cfg.l_max:
        return np.zeros(2)
    g = force_magnitude(d, cfg.l_attract, cfg.l_repel)
    return -g * v / d


@njit(cache=True)
def _accumulate_pair(pos, i, j, box, half, l_a, l_r, l_max2, out):
    dx = pos[j, 0] - pos[i, 0]
    dy = pos[j, 1] - pos[i, 1]
    dx = (dx + half) % box - half
    dy = (dy + half) % box - half
    d2 = dx * dx + dy * dy
    if d2 == 0.0 or d2 > l_max2:
        return
    d = math.sqrt(d2)
    g = math.exp(-d / l_a) / (4.0 * l_a) - math.exp(-d / l_r) / l_r
    fx = -g * dx / d
    fy = -g * dy / d
    out[i, 0] += fx
    out[i, 1] += fy
    out[j, 0] -= fx
    out[j, 1] -= fy


@njit(cache=True)
def _net_forces_brute(pos, box, l_a, l_r, l_max):
    n = pos.shape[0]
    out = np.zeros((n, 2))
    half = 0.5 * box
    l_max2 = l_max * l_max
    for i in range(n):
        for j in range(i + 1, n):
            _accumulate_pair(pos, i, j, box, half, l_a, l_r, l_max2, out)
    return out


@njit(cache=True)
def _net_forces_cells(pos, box, l_a, l_r, l_max, ncell):
    n = pos.shape[0]
    out = np.zeros((n, 2))
    half = 0.5 * box
    l_max2 = l_max * l_max
    size = box / ncell
    cell_of = np.empty(n, dtype=np.int64)
    counts = np.zeros(ncell * ncell + 1, dtype=np.int64)
    for i in range(n):
        cx = min(int(pos[i, 0] / size), ncell - 1)
        cy = min(int(pos[i, 1] / size), ncell - 1)
        c = cx * ncell + cy
        cell_of[i] = c
        counts[c + 1] += 1
    for c in range(ncell * ncell):
        counts[c + 1] += counts[c]
    members = np.empty(n, dtype=np.int64)
    fill = counts[:-1].copy()
    for i in range(n):
        c = cell_of[i]
        members[fill[c]] = i
        fill[c] += 1
    # half shell: self, east, north-east, north, north-west
    offsets = ((1, 0), (1, 1), (0, 1), (-1, 1))
    for cx in range(ncell):
        for cy in range(ncell):
            c = cx * ncell + cy
            for a in range(counts[c], counts[c + 1]):
                for b in range(a + 1, counts[c + 1]):
                    _accumulate_pair(pos, members[a], members[b], box, half, l_a, l_r, l_max2, out)
            for ox, oy in offsets:
                nx = (cx + ox) % ncell
                ny = (cy + oy) % ncell
                c2 = nx * ncell + ny
                for a in range(counts[c], counts[c + 1]):
                    for b in range(counts[c2], counts[c2 + 1]):
                        _accumulate_pair(pos, members[a], members[b], box, half, l_a, l_r, l_max2, out)
    return out


def net_forces(positions: np.ndarray, cfg: SimConfig, method: str | None = None) -> np.ndarray:
    """Sum of pairwise forces on every particle, shape ``(K, 2)``.

    ``method`` is ``"brute"`` (all pairs), ``"cells"`` (cell list, needs at
    least 3 cells of side >= ``l_max`` per axis) or ``"auto"``.
    """
    method = method or cfg.neighbor_method
    pos = np.ascontiguousarray(positions, dtype=float)
    ncell = int(cfg.box_side // cfg.l_max)
    if method == "auto":
        method = "cells" if ncell >= 3 and pos.shape[0] > 64 else "brute"
    if method == "cells":
        if ncell < 3:
            raise ValueError("cell list needs box_side >= 3 * l_max")
        return _net_forces_cells(pos, cfg.box_side, cfg.l_attract, cfg.l_repel, cfg.l_max, ncell)
    return _net_forces_brute(pos, cfg.box_side, cfg.l_attract, cfg.l_repel, cfg.l_max)


def wrap(positions: np.ndarray, box_side: float) -> np.ndarray:
    out = np.mod(positions, box_side)
    # fmod rounding can land exactly on L for tiny negative inputs
    out[out >= box_side] = 0.0
    return out


def tumble_angle(seed: int, particle: int, tumble: int) -> float:
    """Heading drawn by ``particle`` at its ``tumble``-th reorientation."""
    ss = np.random.SeedSequence(seed, spawn_key=(1, particle, tumble))
    return float(np.random.default_rng(ss).uniform(0.0, TWO_PI))


def initial_state(cfg: SimConfig, positions: np.ndarray | None = None) -> ParticleState:
    """Uniform random state, or the given positions with fresh headings/offsets."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    drawn = rng.uniform(0.0, cfg.box_side, size=(cfg.num_particles, 2))
    headings = rng.uniform(0.0, TWO_PI, size=cfg.num_particles)
    offsets = rng.integers(0, cfg.tumble_period, size=cfg.num_particles)
    if positions is None:
        positions = drawn
    else:
        positions = np.asarray(positions, dtype=float)
        if positions.shape != (cfg.num_particles, 2):
            raise ValueError(
                f"initial positions have shape {positions.shape}, expected ({cfg.num_particles}, 2)"
            )
    return ParticleState(wrap(positions.copy(), cfg.box_side), headings, offsets)


def tumbling(step_index: int, tumble_offsets: np.ndarray, tumble_period: int) -> np.ndarray:
    return (step_index - tumble_offsets) % tumble_period == 0


def step(state: ParticleState, step_index: int, cfg: SimConfig) -> ParticleState:
    """Advance one time step; headings tumble first, then positions move."""
    headings = state.headings
    due = np.flatnonzero(tumbling(step_index, state.tumble_offsets, cfg.tumble_period))
    if due.size:
        headings = headings.copy()
        for k in due:
            j = (step_index - int(state.tumble_offsets[k])) // cfg.tumble_period
            headings[k] = tumble_angle(cfg.seed, int(k), j)
    velocity = cfg.beta * np.column_stack((np.cos(headings), np.sin(headings)))
    if cfg.alpha != 0.0 and state.num_particles > 1:
        velocity = velocity + cfg.alpha * net_forces(state.positions, cfg)
    positions = wrap(state.positions + cfg.dt * velocity, cfg.box_side)
    return ParticleState(positions, headings, state.tumble_offsets)


def interacting_mask(positions: np.ndarray, cfg: SimConfig) -> np.ndarray:
    forces = net_forces(positions, cfg)
    return np.hypot(forces[:, 0], forces[:, 1]) > 0.0


def snapshot(state: ParticleState, time_index: int, cfg: SimConfig) -> Snapshot:
    pos = state.positions.copy()
    pos.setflags(write=False)
    mask = interacting_mask(pos, cfg)
    mask.setflags(write=False)
    return Snapshot(time_index, pos, mask)


def run_simulation(
    cfg: SimConfig,
    initial: ParticleState | None = None,
    start_step: int = 0,
    include_start: bool = True,
) -> tuple[list[Snapshot], ParticleState]:
    """Run ``cfg.num_steps`` steps starting at ``start_step``.

    Snapshots are recorded every ``snapshot_stride`` steps counted from
    ``start_step`` and always at the final step.  Returns the snapshots and
    the final state so a run can be continued under a different config.
    """
    state = initial if initial is not None else initial_state(cfg)
    if state.num_particles != cfg.num_particles:
        raise ValueError("initial state particle count does not match config")
    snaps = [snapshot(state, start_step, cfg)] if include_start else []
    end = start_step + cfg.num_steps
    for n in range(start_step, end):
        state = step(state, n, cfg)
        done = n + 1
        if (done - start_step) % cfg.snapshot_stride == 0 or done == end:
            snaps.append(snapshot(state, done, cfg))
    return snaps, state


def run_schedule(phases: list[SimConfig], initial: ParticleState | None = None) -> list[Snapshot]:
    """Run consecutive phases with possibly different parameters.

    Step indices (and so tumble timing) continue across phases.  All phases
    must share particle count, box, seed and tumble period.
    """
    if not phases:
        return []
    first = phases[0]
    for cfg in phases[1:]:
        for name in ("num_particles", "box_side", "seed", "tumble_period"):
            if getattr(cfg, name) != getattr(first, name):
                raise ValueError(f"phases disagree on {name}")
    state = initial if initial is not None else initial_state(first)
    snaps: list[Snapshot] = []
    n = 0
    for k, cfg in enumerate(phases):
        part, state = run_simulation(cfg, state, start_step=n, include_start=(k == 0))
        snaps.extend(part)
        n += cfg.num_steps
    return snaps


def regime_label(alpha: float, beta: float) -> str:
    """Approximate final-configuration regime for a parameter pair."""
    if 0.009 <= beta <= 0.012 and 0.21 <= alpha <= 0.24:
        return CLUSTERED
    if 0.021 <= beta <= 0.024 and 0.09 <= alpha <= 0.12:
        return DISORDERED
    return BRANCHED
