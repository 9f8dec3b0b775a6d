"""Level-indexed transition datasets and their JSON-lines serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch


def _ints(a):
    a = np.array(a, dtype=np.int64).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LevelBlock:
    """Tuples (x_h, a_h, x_{h+1}) at one level plus the known level-h data policy.

    ``rollin`` keeps the (H, X, K) tables of the roll-in mixture when the block
    was sampled in-process; exact-marginal oracles use it, estimators never do.
    """

    h: int
    x: np.ndarray
    a: np.ndarray
    x_next: np.ndarray
    data_policy: np.ndarray  # (X, K)
    mle_idx: np.ndarray
    reg_idx: np.ndarray
    seed: int | None = None
    rollin: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        for name in ("x", "a", "x_next", "mle_idx", "reg_idx"):
            object.__setattr__(self, name, _ints(getattr(self, name)))
        pol = np.array(self.data_policy, dtype=np.float64)
        pol.setflags(write=False)
        object.__setattr__(self, "data_policy", pol)
        n = self.x.shape[0]
        if self.a.shape[0] != n or self.x_next.shape[0] != n:
            raise ShapeMismatch("x, a and x_next must have equal length")
        both = np.concatenate([self.mle_idx, self.reg_idx])
        if both.shape[0] != n or not np.array_equal(np.sort(both), np.arange(n)):
            raise ShapeMismatch("mle and reg splits must partition the sample indices")

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_mle(self) -> int:
        return int(self.mle_idx.shape[0])

    @property
    def n_reg(self) -> int:
        return int(self.reg_idx.shape[0])

    def mle_states(self):
        return self.x[self.mle_idx]

    def mle_next_states(self):
        return self.x_next[self.mle_idx]

    def reg_tuples(self):
        i = self.reg_idx
        return self.x[i], self.a[i], self.x_next[i]


@dataclass(frozen=True)
class TupleDataset:
    blocks: tuple
    init_dist: np.ndarray
    num_states: int
    num_actions: int

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        d0 = np.array(self.init_dist, dtype=np.float64)
        d0.setflags(write=False)
        object.__setattr__(self, "init_dist", d0)
        for i, b in enumerate(self.blocks):
            if b.h != i:
                raise ShapeMismatch(f"block {i} is labelled level {b.h}")

    def __getitem__(self, h) -> LevelBlock:
        return self.blocks[h]

    def __len__(self):
        return len(self.blocks)

    # -- JSON lines --------------------------------------------------------

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({
                "kind": "dataset",
                "init_dist": self.init_dist.tolist(),
                "num_states": self.num_states,
                "num_actions": self.num_actions,
                "levels": len(self.blocks),
            }) + "\n")
            for b in self.blocks:
                fh.write(json.dumps({
                    "kind": "header",
                    "h": b.h,
                    "data_policy": b.data_policy.tolist(),
                    "mle_idx": b.mle_idx.tolist(),
                    "reg_idx": b.reg_idx.tolist(),
                    "seed": b.seed,
                }) + "\n")
                for x, a, y in zip(b.x.tolist(), b.a.tolist(), b.x_next.tolist()):
                    fh.write(json.dumps({"h": b.h, "x": x, "a": a, "x_next": y}) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "TupleDataset":
        meta = None
        headers, rows = {}, {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "dataset":
                meta = rec
            elif kind == "header":
                headers[rec["h"]] = rec
                rows.setdefault(rec["h"], [])
            else:
                rows.setdefault(rec["h"], []).append((rec["x"], rec["a"], rec["x_next"]))
        if meta is None:
            raise ValueError(f"{path}: missing dataset record")
        blocks = []
        for h in range(meta["levels"]):
            hdr = headers[h]
            t = np.array(rows.get(h, []), dtype=np.int64).reshape(-1, 3)
            blocks.append(LevelBlock(h, t[:, 0], t[:, 1], t[:, 2], np.asarray(hdr["data_policy"]),
                                     hdr["mle_idx"], hdr["reg_idx"], hdr.get("seed")))
        return cls(tuple(blocks), meta["init_dist"], meta["num_states"], meta["num_actions"])
