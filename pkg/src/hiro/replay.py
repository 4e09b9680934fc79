"""Fixed-capacity FIFO replay storage for both hierarchy levels.

Items are encoded into rows of named float64 arrays so that minibatches can be
gathered with one fancy-index per field.  ``sample`` returns decoded items;
``sample_rows`` returns the stacked arrays directly for the training loop.
"""

import struct
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidArgumentError, PreconditionError

SNAPSHOT_MAGIC = b"HIROBUF1"


@dataclass
class LowTransition:
    state: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    intrinsic_reward: float
    next_state: np.ndarray
    next_goal: np.ndarray
    terminal: bool


@dataclass
class HighSegment:
    """Up to ``c`` lower-level steps taken under one high-level goal.

    ``behavior_logp`` holds the per-step Gaussian log-density (constant dropped)
    of each stored action under the lower-level behavior policy at collection
    time; it may be ``None`` when no importance-based correction is used.
    """

    states: np.ndarray  # (L, state_dim)
    original_goal: np.ndarray
    actions: np.ndarray  # (L, action_dim)
    env_reward_sum: float
    final_state: np.ndarray
    terminal: bool
    behavior_sigma: float = 1.0
    behavior_logp: np.ndarray = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=np.float64))
        if len(self.states) != len(self.actions) or len(self.states) < 1:
            raise InvalidArgumentError("segment needs equally many (>= 1) states and actions")

    def __len__(self):
        return len(self.states)


def _encode_plain(item):
    return {f.name: np.asarray(getattr(item, f.name), dtype=np.float64) for f in fields(item)}


class LowCodec:
    def encode(self, item):
        return _encode_plain(item)

    def decode(self, row):
        return LowTransition(
            state=row["state"], goal=row["goal"], action=row["action"],
            intrinsic_reward=float(row["intrinsic_reward"]), next_state=row["next_state"],
            next_goal=row["next_goal"], terminal=bool(row["terminal"]))


class SegmentCodec:
    """Pads segments to ``horizon`` steps and records the true length."""

    def __init__(self, horizon):
        self.horizon = int(horizon)

    def encode(self, seg):
        n = len(seg)
        if n > self.horizon:
            raise InvalidArgumentError(f"segment of length {n} exceeds horizon {self.horizon}")
        states = np.zeros((self.horizon, seg.states.shape[1]))
        actions = np.zeros((self.horizon, seg.actions.shape[1]))
        logp = np.full(self.horizon, np.nan)
        states[:n] = seg.states
        actions[:n] = seg.actions
        if seg.behavior_logp is not None:
            logp[:n] = seg.behavior_logp
        return {
            "states": states, "actions": actions, "behavior_logp": logp,
            "length": np.float64(n),
            "original_goal": np.asarray(seg.original_goal, dtype=np.float64),
            "env_reward_sum": np.float64(seg.env_reward_sum),
            "final_state": np.asarray(seg.final_state, dtype=np.float64),
            "terminal": np.float64(seg.terminal),
            "behavior_sigma": np.float64(seg.behavior_sigma),
        }

    def decode(self, row):
        n = int(row["length"])
        logp = row["behavior_logp"][:n]
        return HighSegment(
            states=row["states"][:n], original_goal=row["original_goal"],
            actions=row["actions"][:n], env_reward_sum=float(row["env_reward_sum"]),
            final_state=row["final_state"], terminal=bool(row["terminal"]),
            behavior_sigma=float(row["behavior_sigma"]),
            behavior_logp=None if np.any(np.isnan(logp)) else logp.copy())


class RingBuffer:
    """FIFO store; once full, each insert overwrites the oldest entry."""

    def __init__(self, capacity=200_000, codec=None):
        if capacity < 1:
            raise InvalidArgumentError("capacity must be positive")
        self.capacity = int(capacity)
        self.codec = codec if codec is not None else LowCodec()
        self.size = 0
        self.write_cursor = 0
        self._data = None

    def __len__(self):
        return self.size

    def _allocate(self, row):
        self._data = {k: np.zeros((self.capacity,) + v.shape) for k, v in row.items()}

    def insert(self, item):
        row = self.codec.encode(item)
        if self._data is None:
            self._allocate(row)
        for k, arr in self._data.items():
            arr[self.write_cursor] = row[k]
        self.write_cursor = (self.write_cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _slot(self, i):
        # i-th oldest entry
        start = self.write_cursor if self.size == self.capacity else 0
        return (start + i) % self.capacity

    def __getitem__(self, i):
        if not -self.size <= i < self.size:
            raise IndexError(i)
        slot = self._slot(i % self.size)
        return self.codec.decode({k: v[slot].copy() for k, v in self._data.items()})

    def __iter__(self):
        for i in range(self.size):
            yield self[i]

    def sample_indices(self, batch, rng):
        if self.size == 0:
            raise PreconditionError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=batch)

    def sample_rows(self, batch, rng):
        """Uniform draws with replacement, as a dict of stacked field arrays."""
        idx = self.sample_indices(batch, rng)
        return {k: v[idx] for k, v in self._data.items()}

    def sample(self, batch, rng):
        rows = self.sample_rows(batch, rng)
        return [self.codec.decode({k: v[j] for k, v in rows.items()}) for j in range(batch)]

    def save(self, path):
        """Write the contents, oldest first, in the ``HIROBUF1`` binary layout."""
        names = sorted(self._data) if self._data is not None else []
        order = np.array([self._slot(i) for i in range(self.size)], dtype=np.int64)
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<QQQI", self.capacity, self.size, self.size % self.capacity,
                                 len(names)))
            for name in names:
                shape = self._data[name].shape[1:]
                raw = name.encode()
                fh.write(struct.pack("<I", len(raw)) + raw)
                fh.write(struct.pack("<I", len(shape)))
                fh.write(struct.pack(f"<{len(shape)}Q", *shape))
            for name in names:
                fh.write(self._data[name][order].astype("<f8").tobytes())

    @classmethod
    def load(cls, path, codec=None):
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != SNAPSHOT_MAGIC:
            raise InvalidArgumentError("not a replay snapshot")
        pos = 8
        capacity, size, cursor, n_fields = struct.unpack_from("<QQQI", blob, pos)
        pos += struct.calcsize("<QQQI")
        shapes = {}
        for _ in range(n_fields):
            (n,) = struct.unpack_from("<I", blob, pos)
            name = blob[pos + 4:pos + 4 + n].decode()
            pos += 4 + n
            (ndim,) = struct.unpack_from("<I", blob, pos)
            shape = struct.unpack_from(f"<{ndim}Q", blob, pos + 4)
            pos += 4 + 8 * ndim
            shapes[name] = tuple(shape)
        buf = cls(capacity, codec)
        buf.size, buf.write_cursor = size, cursor
        if shapes:
            buf._data = {}
            for name, shape in shapes.items():
                count = size * int(np.prod(shape, dtype=np.int64))
                arr = np.zeros((capacity,) + shape)
                arr[:size] = np.frombuffer(blob, "<f8", count, pos).reshape((size,) + shape)
                pos += 8 * count
                buf._data[name] = arr
        return buf
