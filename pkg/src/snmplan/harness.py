"""Experiment runner: seeded episode batches, SNM measurement sweeps and bound checks."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .models import Environment, Scenario, bundled_scenario, collides, in_goal
from .planners import PLANNER_TYPES, PlannerSpec, run_episode_with_planner
from .pomdp import (
    DiscretePomdp,
    enumerate_plans,
    finite_snm,
    value_loss_bound,
    alpha_gap_bound,
)
from .snm import MissingTable, SnmLookupTable, build_lookup_table

log = logging.getLogger(__name__)

NOISE_GRID = (0.001, 0.0195, 0.038, 0.057, 0.075)
Z95 = 1.959963984540054


def load_scenario(ref: str | Path) -> Scenario:
    """A bundled scenario name (``maze``, ``empty``) or a scenario file path."""
    ref = str(ref)
    if ref in ("maze", "empty"):
        return bundled_scenario(ref)
    path = Path(ref)
    if not path.exists():
        raise FileNotFoundError(f"scenario file {ref!r} does not exist")
    return Scenario.load(path)


def _noise_pair(v) -> tuple[float, float]:
    if isinstance(v, (int, float)):
        return float(v), float(v)
    if isinstance(v, dict):
        return float(v["e_T"]), float(v.get("e_Z", v["e_T"]))
    e_t, e_z = v
    return float(e_t), float(e_z)


@dataclass
class ScenarioConfig:
    """One experiment: a scenario, a noise grid, planners and episode counts."""

    scenario: str = "maze"
    noise_levels: list = field(default_factory=lambda: [(e, e) for e in NOISE_GRID])
    collision_dynamics: bool | None = None
    observation: str | None = None
    planners: list = field(default_factory=lambda: [PlannerSpec(type="mcts"), PlannerSpec(type="mhfr")])
    episodes: int = 100
    max_steps: int | None = None
    seed: int = 0
    out: str | None = None
    table_dir: str = "tables"
    build_tables: bool = False
    table_nodes: int = 300
    table_samples: int = 10_000

    def __post_init__(self):
        self.noise_levels = [_noise_pair(v) for v in self.noise_levels]
        self.planners = [p if isinstance(p, PlannerSpec) else PlannerSpec.from_dict(p) for p in self.planners]
        if self.episodes < 1:
            raise ValueError("episode count must be at least 1")
        if any(e < 0 for pair in self.noise_levels for e in pair):
            raise ValueError("noise levels must be nonnegative")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        self.base_scenario()  # fail early on a bad reference

    def base_scenario(self) -> Scenario:
        sc = load_scenario(self.scenario)
        if self.collision_dynamics is not None:
            sc = replace(sc, collision_dynamics=bool(self.collision_dynamics))
        if self.observation is not None:
            sc = replace(sc, observation=self.observation)
        return sc

    def scenario_at(self, e_t: float, e_z: float) -> Scenario:
        return self.base_scenario().with_noise(e_t, e_z)

    @property
    def scenario_id(self) -> str:
        sc = self.base_scenario()
        suffix = "-collision" if sc.collision_dynamics else ""
        return f"{sc.name}{suffix}"

    def table_path(self, e_t: float, e_z: float) -> Path:
        return Path(self.table_dir) / f"{self.scenario_id}_eT{e_t:g}_eZ{e_z:g}.json"

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ScenarioConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if base_dir is not None and "scenario" in d and d["scenario"] not in ("maze", "empty"):
            d["scenario"] = str(Path(base_dir) / d["scenario"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["planners"] = [p.to_dict() for p in self.planners]
        d["noise_levels"] = [list(p) for p in self.noise_levels]
        return d


@dataclass
class ResultRow:
    scenario: str
    planner: str
    e_T: float
    e_Z: float
    episodes: int
    mean_return: float
    ci_half_width: float
    goal_rate: float
    collision_rate: float
    mean_snm: float
    mean_mong: float
    general_fraction: float
    threshold: float = math.nan
    rel_value_diff: float = math.nan

    def __post_init__(self):
        if self.ci_half_width < 0 or math.isnan(self.ci_half_width):
            raise ValueError("CI half-width must be a nonnegative number")
        for rate in (self.goal_rate, self.collision_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")


def mean_ci(values) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width from the sample standard error."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, 0.0
    half = Z95 * v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
    return float(v.mean()), float(half)


def relative_value_difference(v_general: float, v_linear: float) -> float:
    """``|(V_general - V_linear) / V_general|``, NaN when ``|V_general| < 1``."""
    if not np.isfinite(v_general) or abs(v_general) < 1.0:
        return math.nan
    return abs((v_general - v_linear) / v_general)


def episode_seed(master: int, scenario_id: str, planner_type: str, noise_index: int, episode: int):
    """Counter-based stream for one episode.

    Planner variants of the same type share streams, so threshold sweeps
    compare settings under common random numbers.
    """
    key = (zlib.crc32(scenario_id.encode()), PLANNER_TYPES.index(planner_type), noise_index, episode)
    return np.random.SeedSequence(master, spawn_key=key)


def _table_seed(config: ScenarioConfig, e_t: float, e_z: float) -> int:
    """Table seed keyed by map and noise level.

    Model variants of one map share the stream, so their tables are
    compared under common random numbers.
    """
    key = f"{config.base_scenario().name}_eT{e_t:g}_eZ{e_z:g}"
    return int(np.random.SeedSequence(config.seed, spawn_key=(zlib.crc32(key.encode()),)).generate_state(1)[0])


def table_for(config: ScenarioConfig, e_t: float, e_z: float, jobs: int = 1) -> SnmLookupTable:
    """Load the SNM table for one noise level, building it if the config allows."""
    path = config.table_path(e_t, e_z)
    if path.exists():
        return SnmLookupTable.load(path)
    if not config.build_tables:
        raise MissingTable(
            f"no SNM table at {path}; build it with "
            f"`snmplan table build --scenario {config.scenario} --e-T {e_t:g} --e-Z {e_z:g} --out {path}` "
            "or pass --build-tables"
        )
    sc = config.scenario_at(e_t, e_z)
    seed = _table_seed(config, e_t, e_z)
    table = build_lookup_table(sc.model(), np.asarray(sc.start_state), config.table_nodes, n=config.table_samples,
                               seed=seed, variant=config.scenario_id, jobs=jobs)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.save(path)
    return table


# tables shared by worker processes, keyed by path
_TABLE_CACHE: dict = {}


def _episode_task(args):
    sc, spec, seed, max_steps, table_path = args
    table = None
    if table_path is not None:
        table = _TABLE_CACHE.get(table_path)
        if table is None:
            table = _TABLE_CACHE[table_path] = SnmLookupTable.load(table_path)
    rec = run_episode_with_planner(sc, spec, seed, max_steps=max_steps, table=table)
    return rec.discounted_return, rec.outcome, rec.general_fraction, rec.mean_snm


def _run_tasks(tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        import multiprocessing

        with multiprocessing.get_context("spawn").Pool(jobs) as pool:
            return pool.map(_episode_task, tasks, chunksize=1)
    return [_episode_task(t) for t in tasks]


def _aggregate(scenario_id, spec, e_t, e_z, results, table) -> ResultRow:
    returns = [r[0] for r in results]
    mean, half = mean_ci(returns)
    n = len(results)
    fractions = [r[2] for r in results if not math.isnan(r[2])]
    return ResultRow(
        scenario=scenario_id,
        planner=spec.type,
        e_T=e_t,
        e_Z=e_z,
        episodes=n,
        mean_return=mean,
        ci_half_width=half,
        goal_rate=sum(r[1] == "goal" for r in results) / n,
        collision_rate=sum(r[1] == "collision" for r in results) / n,
        mean_snm=table.summary()["snm"] if table is not None else math.nan,
        mean_mong=_table_mong(table),
        general_fraction=float(np.mean(fractions)) if fractions else math.nan,
        threshold=spec.threshold if spec.type == "snm" else math.nan,
    )


def _table_mong(table) -> float:
    if table is None or table.mong_t is None:
        return math.nan
    return float(np.mean(np.maximum(table.mong_t, 0.0) + np.maximum(table.mong_z, 0.0)))


def _needs_table(config: ScenarioConfig) -> bool:
    return any(p.type == "snm" for p in config.planners)


def run_experiment(config: ScenarioConfig, jobs: int = 1, write: bool = True) -> list[ResultRow]:
    """Run planners x noise levels x episodes and aggregate one row per (planner, noise level)."""
    sid = config.scenario_id
    tables, table_paths = {}, {}
    for e_t, e_z in config.noise_levels:
        path = config.table_path(e_t, e_z)
        if _needs_table(config) or path.exists():
            tables[(e_t, e_z)] = table_for(config, e_t, e_z, jobs)
            table_paths[(e_t, e_z)] = str(path)
    tasks, keys = [], []
    for ni, (e_t, e_z) in enumerate(config.noise_levels):
        sc = config.scenario_at(e_t, e_z)
        for pi, spec in enumerate(config.planners):
            for ep in range(config.episodes):
                seed = episode_seed(config.seed, sid, spec.type, ni, ep)
                tasks.append((sc, spec, seed, config.max_steps, table_paths.get((e_t, e_z))))
                keys.append((ni, pi))
    results = _run_tasks(tasks, jobs)
    grouped: dict = {}
    for key, res in zip(keys, results):
        grouped.setdefault(key, []).append(res)
    rows = []
    for ni, (e_t, e_z) in enumerate(config.noise_levels):
        level = []
        for pi, spec in enumerate(config.planners):
            level.append(_aggregate(sid, spec, e_t, e_z, grouped[(ni, pi)], tables.get((e_t, e_z))))
        by_type = {r.planner: r.mean_return for r in level}
        if "mcts" in by_type and "mhfr" in by_type:
            diff = relative_value_difference(by_type["mcts"], by_type["mhfr"])
            for r in level:
                r.rel_value_diff = diff
        rows.extend(level)
    if write and config.out:
        write_csv(rows, config.out)
    return rows


def sensitivity_sweep(config: ScenarioConfig, thresholds, jobs: int = 1, write: bool = True) -> list[ResultRow]:
    """One row per threshold for the switching planner, under shared episode streams."""
    if not config.planners:
        raise ValueError("config needs a planner spec to sweep")
    base = next((p for p in config.planners if p.type == "snm"), PlannerSpec(type="snm"))
    specs = [replace(base, threshold=float(mu)) for mu in thresholds]
    return run_experiment(replace(config, planners=specs), jobs=jobs, write=write)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def rows_to_csv(rows, columns=None) -> str:
    """CSV text with a header row and fixed float formatting."""
    if not rows:
        return ""
    dicts = [asdict(r) if not isinstance(r, dict) else r for r in rows]
    columns = columns or list(dicts[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for d in dicts:
        w.writerow([_fmt(d[c]) for c in columns])
    return buf.getvalue()


def write_csv(rows, path, columns=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows, columns))


# -- measurement sweeps ------------------------------------------------------


@dataclass
class MeasureRow:
    scenario: str
    e_T: float
    e_Z: float
    states: int
    psi_t: float
    psi_z: float
    snm: float
    mong_t: float
    mong_z: float
    mong: float
    goal_region_fraction: float


def measure_sweep(config: ScenarioConfig, nodes: int = 300, samples: int = 10_000, mong_states: int = 0,
                  jobs: int = 1, tables_out: str | None = None) -> list[MeasureRow]:
    """Mean SNM and MoNG over a freshly built table at each noise level.

    MoNG is averaged over the first ``mong_states`` table states (0 skips it).
    """
    from .mong import clamp, mong_at

    rows = []
    for e_t, e_z in config.noise_levels:
        sc = config.scenario_at(e_t, e_z)
        model = sc.model()
        seed = _table_seed(config, e_t, e_z)
        table = build_lookup_table(model, np.asarray(sc.start_state), nodes, n=samples, seed=seed,
                                   variant=config.scenario_id, jobs=jobs)
        mt = mz = math.nan
        if mong_states > 0:
            rng = np.random.default_rng(seed + 1)
            vals = np.array([mong_at(model, s, model.actions, samples, r)
                             for s, r in zip(table.states[:mong_states], rng.spawn(min(mong_states, len(table))))])
            mt = float(np.mean([clamp(v) for v in vals[:, 0]]))
            mz = float(np.mean([clamp(v) for v in vals[:, 1]]))
        if tables_out:
            table.save(Path(tables_out) / f"{config.scenario_id}_eT{e_t:g}_eZ{e_z:g}.json")
        s = table.summary()
        near_goal = np.mean(np.hypot(table.states[:, 0] - sc.env.goal[0], table.states[:, 1] - sc.env.goal[1])
                            <= 3 * sc.env.goal_radius)
        rows.append(MeasureRow(config.scenario_id, e_t, e_z, len(table), s["psi_t"], s["psi_z"], s["snm"],
                               mt, mz, mt + mz if mong_states > 0 else math.nan, float(near_goal)))
    if config.out:
        write_csv(rows, config.out)
    return rows


# -- bound verification ------------------------------------------------------


@dataclass
class BoundReport:
    psi_t: float
    psi_z: float
    snm: float
    value_gap: float
    value_bound: float
    truncation: float
    value_slack: float
    alpha_gap: float
    alpha_bound: float
    alpha_slack: float

    @property
    def holds(self) -> bool:
        return self.value_slack >= -1e-9 and self.alpha_slack >= -1e-9


def random_pomdp(n_states: int, n_actions: int, n_obs: int, rng, gamma: float = 0.95) -> DiscretePomdp:
    """Dirichlet rows, uniform rewards in [-1, 1] and a Dirichlet initial belief."""
    T = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    Z = rng.dirichlet(np.ones(n_obs), size=(n_states, n_actions))
    R = rng.uniform(-1.0, 1.0, (n_states, n_actions))
    return DiscretePomdp(T, Z, R, gamma, rng.dirichlet(np.ones(n_states)))


def perturb_pomdp(dp: DiscretePomdp, eps: float, rng) -> DiscretePomdp:
    """Mix every transition and observation row with a random distribution at weight ``eps``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("perturbation weight must lie in [0, 1]")
    qt = rng.dirichlet(np.ones(dp.n_states), size=dp.T.shape[:2])
    qz = rng.dirichlet(np.ones(dp.n_obs), size=dp.Z.shape[:2])
    return dp.with_tensors((1 - eps) * dp.T + eps * qt, (1 - eps) * dp.Z + eps * qz)


def verify_bounds(dp: DiscretePomdp, dp_hat: DiscretePomdp, depth: int, max_plans: int = 200_000) -> BoundReport:
    """Value-loss and per-plan alpha-gap checks between ``dp`` and its approximation ``dp_hat``.

    Both models are solved exactly at ``depth``; the plan optimal for
    ``dp_hat`` is re-evaluated under ``dp``.  The value-loss bound gets the
    finite-horizon truncation term ``gamma^depth r_m / (1 - gamma)``.
    """
    psi_t, psi_z = finite_snm(dp, dp_hat)
    psi = psi_t + psi_z
    _, alphas = enumerate_plans(dp, depth, max_plans)
    _, alphas_hat = enumerate_plans(dp_hat, depth, max_plans)
    v = alphas @ dp.b0
    v_hat = alphas_hat @ dp.b0
    gap = float(v.max() - v[int(np.argmax(v_hat))])
    r_m, gamma = dp.r_m, dp.gamma
    trunc = gamma**depth * r_m / (1.0 - gamma)
    tb = value_loss_bound(psi, r_m, gamma)
    ab = alpha_gap_bound(psi, r_m, gamma)
    agap = float(np.abs(alphas - alphas_hat).max())
    return BoundReport(psi_t, psi_z, psi, gap, tb, trunc, tb + trunc - gap, agap, ab, ab - agap)


def random_bound_suite(count: int = 100, perturbations: int = 10, depth: int = 3, seed: int = 0,
                       sizes=(3, 2, 2)) -> list[BoundReport]:
    """Bound checks over random POMDPs, each with several random perturbation weights."""
    reports = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        dp = random_pomdp(*sizes, rng)
        for _ in range(perturbations):
            eps = float(rng.uniform(0.0, 0.5))
            reports.append(verify_bounds(dp, perturb_pomdp(dp, eps, rng), depth))
    return reports


# -- random environments -----------------------------------------------------


def random_environments(count: int, obstacle_counts, seed: int, out_dir=None, size: float = 0.1,
                        max_tries: int = 1000, base: Scenario | None = None) -> list[Scenario]:
    """Scenarios with uniformly placed square obstacles of side ``size``.

    Obstacles overlapping the start footprint or the goal disc are
    rejected; a scenario that cannot be filled within ``max_tries`` draws
    is skipped and logged.
    """
    base = base or bundled_scenario("empty")
    start = np.asarray(base.start_state)
    goal = np.asarray(base.env.goal)
    clear = base.env.goal_radius + 0.5 * size * math.sqrt(2)
    out = []
    for k in obstacle_counts:
        for i in range(count):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(k), i)))
            boxes, tries = [], 0
            while len(boxes) < k and tries < max_tries:
                tries += 1
                lo = rng.uniform(-1.0, 1.0 - size, 2)
                box = np.concatenate([lo, lo + size])
                if np.hypot(*(0.5 * (box[:2] + box[2:]) - goal)) < clear:
                    continue
                env = replace(base.env, obstacles=np.array(boxes + [box]))
                if bool(collides(start, env)):
                    continue
                boxes.append(box)
            if len(boxes) < k:
                log.warning("skipping environment %d with %d obstacles: placement failed", i, k)
                continue
            env = Environment(np.array(boxes).reshape(-1, 4), base.env.goal, base.env.goal_radius,
                              base.env.beacons, base.env.half_extents)
            sc = replace(base, name=f"random-k{k}-{i:03d}", env=env)
            assert not bool(collides(start, env)) and not bool(in_goal(start, env))
            out.append(sc)
            if out_dir is not None:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                d = {"format": "snmplan-scenario", "version": 1, **sc.to_dict()}
                (Path(out_dir) / f"{sc.name}.json").write_text(json.dumps(d, indent=2))
    return out
