"""Deterministic point-mass navigation tasks: gather, maze, push, fall (plus ``open``).

The world is tiled by 8x8 cells addressed by their centers, so cell ``(8, 16)``
covers ``[4, 12] x [12, 20]``.  Every cell of the layout's bounding box padded
by one cell that is not listed as free is an immovable wall.

The agent is a double integrator with a square hull of half-width 0.75::

    v <- clip(0.95 * v + clip(a, -1, 1), -1, 1)
    p <- p + v            (x first, then y, each resolved against obstacles)

Movable blocks are pushed along with the agent when it drives into one of their
faces; they carry no momentum and stop at walls and other blocks.  In ``fall``
the floor is at height 4 except over the chasm; a block that slides more than
halfway into the chasm drops in and becomes a bridge at floor height.  An agent
whose center is over an uncovered chasm cell drops to the bottom and can no
longer move; the episode still runs to 500 steps.

Observation layout: ``[position, velocity, t/500, target, block x/y...,
(gather) 4 nearest items as (dx, dy, +1 apple / -1 bomb)]``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .goals import GoalSpace

CELL = 8.0
HALF_CELL = 4.0
AGENT_HALF = 0.75
A_MAX = 1.0
V_MAX = 1.0
DRAG = 0.95
EPISODE_LENGTH = 500
SUCCESS_RADIUS = 5.0
PLATFORM_Z = 4.5
CHASM_Z = 0.5
GATHER_HALF = 10.0
GATHER_ITEMS = 8
ITEM_RADIUS = 0.5
NEAREST_ITEMS = 4
_EPS = 1e-9


@dataclass(frozen=True)
class EnvSpec:
    name: str
    free_cells: tuple = ()
    start: tuple = (0.0, 0.0)
    block_starts: tuple = ()
    block_axes: tuple = (0, 1)  # axes along which blocks may be pushed
    chasm: tuple = None  # (xmin, xmax, ymin, ymax)
    target_low: tuple = None  # uniform target box at reset
    target_high: tuple = None
    fixed_target: tuple = None
    eval_target: tuple = None
    bounds: tuple = None  # explicit open arena (xmin, xmax, ymin, ymax) instead of cells
    goal_limit: tuple = (10.0, 10.0)
    gather: bool = False

    @property
    def dims(self):
        return len(self.start)

    @property
    def navigation(self):
        return not self.gather and (self.fixed_target is not None or self.target_low is not None)


MAZE = EnvSpec(
    name="maze",
    free_cells=((0, 0), (8, 0), (16, 0), (16, 8), (16, 16), (8, 16), (0, 16)),
    target_low=(-4.0, -4.0), target_high=(20.0, 20.0), eval_target=(0.0, 16.0))

PUSH = EnvSpec(
    name="push",
    free_cells=((0, 0), (-8, 0), (-8, 8), (0, 8), (8, 8), (16, 8), (0, 16)),
    block_starts=((0.0, 8.0),),
    fixed_target=(0.0, 19.0), eval_target=(0.0, 19.0))

# x mirrored relative to the printed list so that the block at (8, 8) and the
# chasm [-4, 12] x [12, 20] sit in the same two columns as the free cells
FALL = EnvSpec(
    name="fall",
    free_cells=((8, 0), (0, 0), (8, 8), (0, 8), (8, 16), (0, 16), (8, 24), (0, 24)),
    start=(0.0, 0.0, PLATFORM_Z),
    block_starts=((8.0, 8.0),), block_axes=(1,),
    chasm=(-4.0, 12.0, 12.0, 20.0),
    fixed_target=(0.0, 27.0, PLATFORM_Z), eval_target=(0.0, 27.0, PLATFORM_Z),
    goal_limit=(10.0, 10.0, 4.0))

GATHER = EnvSpec(
    name="gather",
    bounds=(-GATHER_HALF, GATHER_HALF, -GATHER_HALF, GATHER_HALF),
    gather=True)

OPEN = EnvSpec(
    name="open",
    bounds=(-GATHER_HALF, GATHER_HALF, -GATHER_HALF, GATHER_HALF))

SPECS = {s.name: s for s in (GATHER, MAZE, PUSH, FALL, OPEN)}


@dataclass
class EnvState:
    position: np.ndarray
    velocity: np.ndarray
    blocks: np.ndarray  # (n_blocks, 2) centers
    fallen: np.ndarray  # block dropped into the chasm
    target: np.ndarray
    step: int = 0
    fell: bool = False
    items: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    item_kind: np.ndarray = field(default_factory=lambda: np.zeros(0))
    collected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool
    success: bool


def _cell_box(cx, cy):
    return (cx - HALF_CELL, cx + HALF_CELL, cy - HALF_CELL, cy + HALF_CELL)


def wall_cells(spec):
    """Centers of every immovable wall cell of a cell-based layout."""
    if not spec.free_cells:
        return []
    xs = [c[0] for c in spec.free_cells]
    ys = [c[1] for c in spec.free_cells]
    free = set(spec.free_cells)
    walls = []
    for x in range(int(min(xs) - CELL), int(max(xs) + CELL) + 1, int(CELL)):
        for y in range(int(min(ys) - CELL), int(max(ys) + CELL) + 1, int(CELL)):
            if (x, y) not in free:
                walls.append((x, y))
    return walls


def _open_walls(bounds):
    # four slabs around an open rectangle
    x0, x1, y0, y1 = bounds
    t = CELL
    return [(x0 - t, x0, y0 - t, y1 + t), (x1, x1 + t, y0 - t, y1 + t),
            (x0 - t, x1 + t, y0 - t, y0), (x0 - t, x1 + t, y1, y1 + t)]


def _overlapping(boxes, lo_x, hi_x, lo_y, hi_y):
    if len(boxes) == 0:
        return np.zeros(0, dtype=bool)
    return ((boxes[:, 0] < hi_x - _EPS) & (boxes[:, 1] > lo_x + _EPS)
            & (boxes[:, 2] < hi_y - _EPS) & (boxes[:, 3] > lo_y + _EPS))


def _resolve_axis(pos, half, axis, delta, obstacles):
    """Move a box of half-width ``half`` by ``delta`` along ``axis``, stopping at obstacles."""
    new = pos.copy()
    new[axis] += delta
    if delta == 0 or len(obstacles) == 0:
        return new
    hit = _overlapping(obstacles, new[0] - half, new[0] + half, new[1] - half, new[1] + half)
    if not np.any(hit):
        return new
    o = obstacles[hit]
    if delta > 0:
        limit = np.min(o[:, 2 * axis]) - half
        new[axis] = min(max(limit, pos[axis]), new[axis])
    else:
        limit = np.max(o[:, 2 * axis + 1]) + half
        new[axis] = max(min(limit, pos[axis]), new[axis])
    return new


class PointEnv:
    """One episode-at-a-time state machine for an :class:`EnvSpec`."""

    action_dim = 2

    def __init__(self, spec):
        self.spec = SPECS[spec] if isinstance(spec, str) else spec
        if self.spec.bounds is not None:
            boxes = _open_walls(self.spec.bounds)
        else:
            boxes = [_cell_box(*c) for c in wall_cells(self.spec)]
        self.walls = np.array(boxes, dtype=np.float64).reshape(-1, 4)
        self.goal_space = GoalSpace(tuple(range(self.spec.dims)), self.spec.goal_limit)
        self.state = None

    @property
    def obs_dim(self):
        d = self.spec.dims
        n = 2 * d + 1 + (d if self.spec.navigation else 0) + 2 * len(self.spec.block_starts)
        if self.spec.gather:
            n += 3 * NEAREST_ITEMS
        return n

    @property
    def action_low(self):
        return -A_MAX * np.ones(self.action_dim)

    @property
    def action_high(self):
        return A_MAX * np.ones(self.action_dim)

    # -- episode control ------------------------------------------------------

    def reset(self, rng, target=None):
        spec = self.spec
        if target is not None:
            tgt = np.asarray(target, dtype=np.float64)
        elif spec.fixed_target is not None:
            tgt = np.array(spec.fixed_target, dtype=np.float64)
        elif spec.target_low is not None:
            tgt = rng.uniform(spec.target_low, spec.target_high)
        else:
            tgt = np.zeros(0)
        nb = len(spec.block_starts)
        self.state = EnvState(
            position=np.array(spec.start, dtype=np.float64),
            velocity=np.zeros(spec.dims),
            blocks=np.array(spec.block_starts, dtype=np.float64).reshape(nb, 2),
            fallen=np.zeros(nb, dtype=bool),
            target=tgt)
        if spec.gather:
            self._place_items(rng)
        return self.observation()

    def _place_items(self, rng):
        lim = GATHER_HALF - 1.0
        pts = []
        while len(pts) < 2 * GATHER_ITEMS:
            p = rng.uniform(-lim, lim, size=2)
            # keep the start cell clear
            if np.max(np.abs(p)) > HALF_CELL / 2:
                pts.append(p)
        s = self.state
        s.items = np.array(pts)
        s.item_kind = np.r_[np.ones(GATHER_ITEMS), -np.ones(GATHER_ITEMS)]
        s.collected = np.zeros(2 * GATHER_ITEMS, dtype=bool)

    def observation(self):
        s, spec = self.state, self.spec
        parts = [s.position, s.velocity, [s.step / EPISODE_LENGTH]]
        if spec.navigation:
            parts.append(s.target)
        if len(s.blocks):
            parts.append(s.blocks.ravel())
        if spec.gather:
            parts.append(self._nearest_items())
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    def _nearest_items(self):
        s = self.state
        out = np.zeros((NEAREST_ITEMS, 3))
        live = np.flatnonzero(~s.collected)
        if len(live):
            rel = s.items[live] - s.position[:2]
            order = np.argsort(np.hypot(rel[:, 0], rel[:, 1]), kind="stable")[:NEAREST_ITEMS]
            out[:len(order), :2] = rel[order]
            out[:len(order), 2] = s.item_kind[live[order]]
        return out.ravel()

    # -- dynamics -------------------------------------------------------------

    def _block_boxes(self, exclude=None):
        s = self.state
        idx = [i for i in range(len(s.blocks)) if not s.fallen[i] and i != exclude]
        if not idx:
            return np.zeros((0, 4))
        b = s.blocks[idx]
        return np.stack([b[:, 0] - HALF_CELL, b[:, 0] + HALF_CELL,
                         b[:, 1] - HALF_CELL, b[:, 1] + HALF_CELL], axis=1)

    def _move_agent_axis(self, axis, delta):
        s = self.state
        pos = s.position[:2].copy()
        moved = pos.copy()
        moved[axis] += delta
        lo_x, hi_x = moved[0] - AGENT_HALF, moved[0] + AGENT_HALF
        lo_y, hi_y = moved[1] - AGENT_HALF, moved[1] + AGENT_HALF
        for i in range(len(s.blocks)):
            if s.fallen[i] or axis not in self.spec.block_axes:
                continue
            bx, by = s.blocks[i]
            box = np.array([bx - HALF_CELL, bx + HALF_CELL, by - HALF_CELL, by + HALF_CELL])
            if not _overlapping(box[None], lo_x, hi_x, lo_y, hi_y)[0]:
                continue
            if delta > 0:
                push = moved[axis] + AGENT_HALF - box[2 * axis]
            else:
                push = moved[axis] - AGENT_HALF - box[2 * axis + 1]
            obstacles = np.concatenate([self.walls, self._block_boxes(exclude=i)])
            s.blocks[i] = _resolve_axis(s.blocks[i], HALF_CELL, axis, push, obstacles)
            self._maybe_drop_block(i)
        obstacles = np.concatenate([self.walls, self._block_boxes()])
        new = _resolve_axis(pos, AGENT_HALF, axis, delta, obstacles)
        s.position[:2] = new
        return new[axis] - pos[axis]

    def _maybe_drop_block(self, i):
        ch = self.spec.chasm
        if ch is None:
            return
        b = self.state.blocks[i]
        if ch[0] < b[0] < ch[1] and ch[2] < b[1] < ch[3]:
            # snap into the chasm cell under the block's center
            self.state.blocks[i] = np.round(b / CELL) * CELL
            self.state.fallen[i] = True

    def _over_open_chasm(self):
        ch = self.spec.chasm
        s = self.state
        x, y = s.position[:2]
        if ch is None or not (ch[0] < x < ch[1] and ch[2] < y < ch[3]):
            return False
        for b, fallen in zip(s.blocks, s.fallen):
            if fallen and abs(x - b[0]) <= HALF_CELL and abs(y - b[1]) <= HALF_CELL:
                return False
        return True

    def step(self, action):
        s = self.state
        if s is None:
            raise InvalidArgumentError("reset() must be called before step()")
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (self.action_dim,) or not np.all(np.isfinite(a)):
            raise InvalidArgumentError(f"action must be {self.action_dim} finite values, got {a!r}")
        if s.step >= EPISODE_LENGTH:
            raise InvalidArgumentError("episode is over; call reset()")
        a = np.clip(a, -A_MAX, A_MAX)
        if not s.fell:
            v = np.clip(DRAG * s.velocity[:2] + a, -V_MAX, V_MAX)
            moved = np.array([self._move_agent_axis(0, v[0]), self._move_agent_axis(1, v[1])])
            old_z = s.position[2] if self.spec.dims == 3 else None
            s.velocity[:2] = np.clip(moved, -V_MAX, V_MAX)
            if self.spec.dims == 3:
                if self._over_open_chasm():
                    s.fell = True
                    s.position[2] = CHASM_Z
                    s.velocity[:] = 0.0
                    s.velocity[2] = CHASM_Z - old_z
        else:
            s.velocity[:] = 0.0
        s.step += 1
        reward = self._reward()
        terminal = s.step >= EPISODE_LENGTH
        success = bool(terminal and self.spec.navigation and self.distance_to_target() < SUCCESS_RADIUS)
        return StepResult(self.observation(), reward, terminal, success)

    def distance_to_target(self):
        s = self.state
        return float(np.linalg.norm(s.target - s.position))

    def _reward(self):
        if self.spec.gather:
            s = self.state
            d = np.hypot(*(s.items - s.position[:2]).T)
            got = (~s.collected) & (d <= ITEM_RADIUS + AGENT_HALF)
            s.collected |= got
            return float(np.sum(s.item_kind[got]))
        if self.spec.navigation:
            return -self.distance_to_target()
        return 0.0


def make_env(name):
    if name not in SPECS:
        raise InvalidArgumentError(f"unknown env {name!r}; expected one of {sorted(SPECS)}")
    return PointEnv(SPECS[name])


def success_of_episode(final_position, target):
    """Strictly within 5 units of the target at the last step."""
    d = np.linalg.norm(np.asarray(final_position, float) - np.asarray(target, float))
    return bool(d < SUCCESS_RADIUS)


def dump_trajectory(path, records):
    """Write ``{"step", "position", "action", "reward"}`` dicts, one JSON object per line."""
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({
                "step": int(r["step"]),
                "position": [float(x) for x in r["position"]],
                "action": [float(x) for x in r["action"]],
                "reward": float(r["reward"]),
            }) + "\n")
