"""Statistical-distance non-linearity measure (SNM).

Total variation between the true and the linearized transition and
observation models is estimated with shared histograms, evaluated at
states sampled by a kinodynamic RRT, stored in a lookup table and queried
online by nearest neighbour.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .histogram import HistogramGrid
from .linearize import linearize_at, linearized_observation_sample, linearized_transition_sample
from .pomdp import ParticleBelief

log = logging.getLogger(__name__)

TABLE_FORMAT = "snmplan-snm-table"
TABLE_VERSION = 1


class InvalidScenario(ValueError):
    pass


class MissingTable(FileNotFoundError):
    pass


def tv_histogram(samples_p, samples_q, grid: HistogramGrid | None = None, bins=5) -> float:
    """``0.5 * sum |p_i - q_i|`` over a shared grid.

    Without an explicit grid the bounds come from the union of both sets.
    """
    p = np.asarray(samples_p, dtype=float)
    q = np.asarray(samples_q, dtype=float)
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise ValueError("both sample sets must be nonempty")
    p = p.reshape(p.shape[0], -1)
    q = q.reshape(q.shape[0], -1)
    if grid is None:
        grid = HistogramGrid.from_samples(p, q, bins=bins)
    cp = grid.counts(p) / p.shape[0]
    cq = grid.counts(q) / q.shape[0]
    return float(min(1.0, 0.5 * np.abs(cp - cq).sum()))


# -- state embedding ----------------------------------------------------------


def angle_dims_of(model) -> tuple:
    return tuple(getattr(model, "angle_dims", ()))


def embed_states(states, lower, upper, angle_dims=()) -> np.ndarray:
    """Normalize to the unit box; angles become ``(cos, sin) / 2`` so their span is also 1."""
    s = np.atleast_2d(np.asarray(states, dtype=float))
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    cols = []
    for d in range(s.shape[1]):
        if d in angle_dims:
            cols.append(0.5 * np.cos(s[:, d]))
            cols.append(0.5 * np.sin(s[:, d]))
        else:
            cols.append((s[:, d] - lower[d]) / (upper[d] - lower[d]))
    return np.stack(cols, axis=1)


def normalized_distance(s1, s2, lower, upper, angle_dims=()) -> float:
    e = embed_states(np.vstack([s1, s2]), lower, upper, angle_dims)
    return float(np.linalg.norm(e[0] - e[1]))


# -- per-state components -----------------------------------------------------


def _true_transition(model, reps, a, rng):
    """True successors; collision-terminal models gain a contact-flag column."""
    nxt, hit = model.sample_transition_outcome(reps, a, rng)
    if getattr(model, "collision_terminal", False):
        return np.column_stack([nxt, hit.astype(float)])
    return nxt


def _flag_grid(p, q, bins):
    """Grid from the continuous columns plus a fixed two-cell flag column."""
    g = HistogramGrid.from_samples(p[:, :-1], q[:, :-1], bins=bins)
    return HistogramGrid(np.append(g.lower, -0.5), np.append(g.upper, 1.5), np.append(g.bins, 2))


def transition_tv_at(model, s, a, n: int, rng, bins=5) -> float:
    s = np.asarray(s, dtype=float)
    reps = np.repeat(s[None, :], n, axis=0)
    p = _true_transition(model, reps, a, rng)
    lin = linearize_at(model, s, a)
    q = linearized_transition_sample(lin, reps, a, rng, model)
    if p.shape[1] > q.shape[1]:
        q = np.column_stack([q, np.zeros(n)])
        return tv_histogram(p, q, _flag_grid(p, q, bins))
    return tv_histogram(p, q, bins=bins)


def observation_tv_at(model, s, n: int, rng, bins=5) -> float:
    s = np.asarray(s, dtype=float)
    reps = np.repeat(s[None, :], n, axis=0)
    p = model.sample_observation(reps, None, rng)
    lin = linearize_at(model, s, model.actions[0])
    q = linearized_observation_sample(lin, reps, rng, model)
    return tv_histogram(p, q, bins=bins)


def snm_components_at(model, s, actions, n: int, k_per_dim=5, rng=None) -> tuple[float, float]:
    """``(psi_T(s), psi_Z(s))``: maximum over ``actions`` of the transition TV, and the observation TV.

    The observation function does not depend on the action, so its TV is
    computed once.
    """
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    if actions.shape[0] == 0:
        raise ValueError("action set must be nonempty")
    if n < 1000:
        raise ValueError("need at least 1000 samples per action")
    rng = np.random.default_rng() if rng is None else rng
    psi_t = max(transition_tv_at(model, s, a, n, rng, k_per_dim) for a in actions)
    psi_z = observation_tv_at(model, s, n, rng, k_per_dim)
    return psi_t, psi_z


# -- state sampling -----------------------------------------------------------


def _start_state(b0, rng):
    if isinstance(b0, ParticleBelief):
        return np.asarray(b0.sample(rng, 1)[0], dtype=float)
    return np.asarray(b0, dtype=float)


def rrt_state_samples(model, b0, node_budget: int, rng, stall_limit: int = 500) -> np.ndarray:
    """Nodes of kinodynamic RRTs grown with noise-free dynamics.

    Each iteration samples a random state, picks the nearest node in the
    embedded metric and applies the action of ``model.actions`` whose
    one-step result lands closest to the sample.  Colliding results are
    discarded, except that with collision dynamics the bounced state is a
    valid node.  After ``stall_limit`` consecutive rejections a fresh tree
    is started from another draw of ``b0``.
    """
    if node_budget < 1:
        raise ValueError("node budget must be at least 1")
    env = getattr(model, "env", None)
    lower, upper = model.state_space.lower, model.state_space.upper
    angles = angle_dims_of(model)
    start = _start_state(b0, rng)
    if env is not None and bool(_collides(model, start)):
        raise InvalidScenario(f"start state {start.tolist()} is in collision")
    nodes = np.empty((node_budget, start.size))
    emb = np.empty((node_budget, embed_states(start, lower, upper, angles).shape[1]))
    nodes[0] = start
    emb[0] = embed_states(start, lower, upper, angles)[0]
    count, fails = 1, 0
    actions = np.atleast_2d(model.actions)
    zero_v = np.zeros(model.transition_noise_cov.shape[0])
    while count < node_budget:
        target = lower + rng.random(start.size) * (upper - lower)
        t_emb = embed_states(target, lower, upper, angles)[0]
        near = int(np.argmin(np.sum((emb[:count] - t_emb) ** 2, axis=1)))
        cand, hit = _noise_free_successors(model, nodes[near], actions, zero_v)
        c_emb = embed_states(cand, lower, upper, angles)
        dist = np.sum((c_emb - t_emb) ** 2, axis=1)
        # skip successors that duplicate an existing node
        gap = np.min(np.sum((c_emb[:, None, :] - emb[None, :count, :]) ** 2, axis=2), axis=1)
        valid = gap > 1e-18
        if not getattr(model, "collision_dynamics", False):
            valid &= ~hit
        if np.any(valid):
            best = int(np.argmin(np.where(valid, dist, np.inf)))
            nodes[count] = cand[best]
            emb[count] = c_emb[best]
            count += 1
            fails = 0
            continue
        fails += 1
        if fails >= stall_limit:
            fresh = _start_state(b0, rng)
            if env is None or not _collides(model, fresh):
                nodes[count] = fresh
                emb[count] = embed_states(fresh, lower, upper, angles)[0]
                count += 1
            fails = 0
    return nodes


def _collides(model, s):
    from .models import collides

    return collides(s, model.env)


def _noise_free_successors(model, s, actions, zero_v):
    reps = np.repeat(np.asarray(s, dtype=float)[None, :], actions.shape[0], axis=0)
    if hasattr(model, "transition"):
        nxt, hit = model.transition(reps, actions, zero_v)
        return nxt, np.asarray(hit, dtype=bool)
    nxt = model.clip_state(model.dynamics(reps, actions, zero_v))
    return nxt, np.zeros(actions.shape[0], dtype=bool)


# -- lookup table -------------------------------------------------------------


@dataclass
class SnmLookupTable:
    """Per-state SNM components with a nearest-neighbour index."""

    states: np.ndarray
    psi_t: np.ndarray
    psi_z: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    angle_dims: tuple = ()
    metadata: dict = field(default_factory=dict)
    mong_t: np.ndarray | None = None
    mong_z: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.psi_t = np.asarray(self.psi_t, dtype=float).reshape(-1)
        self.psi_z = np.asarray(self.psi_z, dtype=float).reshape(-1)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.angle_dims = tuple(int(d) for d in self.angle_dims)
        if self.states.shape[0] == 0:
            raise ValueError("lookup table must be nonempty")
        if not (self.psi_t.shape == self.psi_z.shape == (self.states.shape[0],)):
            raise ValueError("one value per state is required")
        for v in (self.psi_t, self.psi_z):
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError("SNM components must lie in [0, 1]")
        for name in ("mong_t", "mong_z"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float).reshape(-1))
        self._tree = cKDTree(embed_states(self.states, self.lower, self.upper, self.angle_dims))

    def __len__(self):
        return self.states.shape[0]

    @property
    def psi(self) -> np.ndarray:
        return self.psi_t + self.psi_z

    def nearest(self, states) -> np.ndarray:
        _, idx = self._tree.query(embed_states(states, self.lower, self.upper, self.angle_dims))
        return np.atleast_1d(idx)

    def lookup(self, states) -> np.ndarray:
        return self.psi[self.nearest(states)]

    def summary(self) -> dict:
        out = {"states": len(self), "psi_t": float(self.psi_t.mean()), "psi_z": float(self.psi_z.mean()),
               "snm": float(self.psi.mean())}
        if self.mong_t is not None:
            out["mong_t"] = float(np.maximum(self.mong_t, 0).mean())
            out["mong_z"] = float(np.maximum(self.mong_z, 0).mean())
            out["mong"] = out["mong_t"] + out["mong_z"]
        return out

    def rows(self) -> list:
        rows = []
        for i in range(len(self)):
            r = {"state": self.states[i].tolist(), "psi_t": float(self.psi_t[i]), "psi_z": float(self.psi_z[i])}
            if self.mong_t is not None:
                r["mong_t"] = float(self.mong_t[i])
                r["mong_z"] = float(self.mong_z[i])
            rows.append(r)
        return rows

    def content_hash(self) -> str:
        body = json.dumps({"metadata": self.metadata, "rows": self.rows()}, sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "format": TABLE_FORMAT,
            "version": TABLE_VERSION,
            "metadata": self.metadata,
            "bounds": {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "angle_dims": list(self.angle_dims)},
            "hash": self.content_hash(),
            "rows": self.rows(),
        }

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> "SnmLookupTable":
        if d.get("format") != TABLE_FORMAT:
            raise ValueError("not an SNM table file")
        rows = d["rows"]
        has_mong = bool(rows) and "mong_t" in rows[0]
        table = cls(
            states=[r["state"] for r in rows],
            psi_t=[r["psi_t"] for r in rows],
            psi_z=[r["psi_z"] for r in rows],
            lower=d["bounds"]["lower"],
            upper=d["bounds"]["upper"],
            angle_dims=d["bounds"].get("angle_dims", ()),
            metadata=d.get("metadata", {}),
            mong_t=[r["mong_t"] for r in rows] if has_mong else None,
            mong_z=[r["mong_z"] for r in rows] if has_mong else None,
        )
        if "hash" in d and d["hash"] != table.content_hash():
            raise ValueError("table content hash mismatch")
        return table

    @classmethod
    def load(cls, path) -> "SnmLookupTable":
        path = Path(path)
        if not path.exists():
            raise MissingTable(f"no SNM table at {path}; build one with `snmplan table build --out {path}`")
        return cls.from_dict(json.loads(path.read_text()))


def _evaluate_one(args):
    from .mong import mong_at

    model, s, actions, n, k_per_dim, r, with_mong = args
    row = np.zeros(4)
    row[:2] = snm_components_at(model, s, actions, n, k_per_dim, r)
    if with_mong:
        row[2:] = mong_at(model, s, actions, n, r)
    return row


def evaluate_states(model, states, actions, n: int, k_per_dim, rng, with_mong: bool = False, jobs: int = 1):
    """SNM (and optionally raw MoNG) components for each state, one child stream per state.

    Results do not depend on ``jobs``: every state owns its stream.
    """
    tasks = [(model, s, actions, n, k_per_dim, r, with_mong) for s, r in zip(states, rng.spawn(len(states)))]
    if jobs > 1 and len(tasks) > 1:
        import multiprocessing

        with multiprocessing.get_context("spawn").Pool(jobs) as pool:
            rows = pool.map(_evaluate_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))
    else:
        rows = [_evaluate_one(task) for task in tasks]
    return np.array(rows).reshape(len(states), 4)


def build_lookup_table(model, b0, node_budget: int, n: int = 10_000, k_per_dim=5, actions=None, rng=None,
                       seed: int | None = None, with_mong: bool = False, variant: str = "", jobs: int = 1) -> SnmLookupTable:
    """Sample states with the RRT and evaluate both SNM components at each of them."""
    if rng is None:
        rng = np.random.default_rng(seed)
    actions = np.atleast_2d(model.actions if actions is None else actions)
    states = rrt_state_samples(model, b0, node_budget, rng)
    vals = evaluate_states(model, states, actions, n, k_per_dim, rng, with_mong, jobs)
    noise = getattr(model, "noise", None)
    meta = {
        "variant": variant,
        "e_T": None if noise is None else noise.e_T,
        "e_Z": None if noise is None else noise.e_Z,
        "n": int(n),
        "k_per_dim": int(k_per_dim),
        "actions": actions.tolist(),
        "seed": seed,
        "nodes": int(node_budget),
    }
    return SnmLookupTable(states, vals[:, 0], vals[:, 1], model.state_space.lower, model.state_space.upper,
                          angle_dims_of(model), meta,
                          vals[:, 2] if with_mong else None, vals[:, 3] if with_mong else None)


def approximate_snm(belief, table: SnmLookupTable) -> float:
    """Largest ``psi_T + psi_Z`` over the table entries nearest to the particles."""
    particles = belief.particles if isinstance(belief, ParticleBelief) else np.atleast_2d(belief)
    return float(table.lookup(particles).max())


# -- local Lipschitz bound ---------------------------------------------------


def lipschitz_gap_bound(s1, s2, c_t: float, c_that: float, n_dim: int | None = None) -> float:
    """``0.5 * sqrt(n) * |s1 - s2| * (C_T + C_That)`` for states already in the unit box."""
    if c_t < 0 or c_that < 0:
        raise ValueError("Lipschitz constants must be nonnegative")
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    n = s1.size if n_dim is None else n_dim
    return 0.5 * math.sqrt(n) * float(np.linalg.norm(s1 - s2)) * (c_t + c_that)


def _linearized_dist(model, s, a, n, rng):
    reps = np.repeat(np.asarray(s, dtype=float)[None, :], n, axis=0)
    return linearized_transition_sample(linearize_at(model, s, a), reps, a, rng, model)


def estimate_lipschitz_constants(model, probe_pairs, actions, n: int, rng, bins=5) -> tuple[float, float]:
    """Empirical ``(C_T, C_That)`` from finite differences over probe pairs.

    For each pair the histogram TV between the two true (and the two
    linearized) transition distributions is divided by
    ``0.5 * sqrt(n_dim) * D``, and the largest ratio over pairs and actions
    is kept.  By the triangle inequality these constants bound the change
    of ``psi_T`` between the probed states.
    """
    lower, upper = model.state_space.lower, model.state_space.upper
    c_t = c_h = 0.0
    for s1, s2 in probe_pairs:
        u1 = (np.asarray(s1) - lower) / (upper - lower)
        u2 = (np.asarray(s2) - lower) / (upper - lower)
        scale = lipschitz_gap_bound(u1, u2, 1.0, 0.0)
        if scale <= 0:
            continue
        for a in np.atleast_2d(actions):
            r1 = np.repeat(np.asarray(s1, float)[None, :], n, axis=0)
            r2 = np.repeat(np.asarray(s2, float)[None, :], n, axis=0)
            c_t = max(c_t, tv_histogram(model.sample_transition(r1, a, rng), model.sample_transition(r2, a, rng),
                                        bins=bins) / scale)
            c_h = max(c_h, tv_histogram(_linearized_dist(model, s1, a, n, rng), _linearized_dist(model, s2, a, n, rng),
                                        bins=bins) / scale)
    return c_t, c_h
