"""Acceptance criteria, each printing one PASS/FAIL line.

Run alone with ``pytest -m slow tests/test_acceptance.py -s``; the whole
file takes roughly an hour and a half on one core.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import norm

from conftest import ACCEPTANCE_LINES
from snmplan.harness import (
    NOISE_GRID,
    ScenarioConfig,
    measure_sweep,
    random_bound_suite,
    rows_to_csv,
    run_experiment,
    sensitivity_sweep,
)
from snmplan.histogram import HistogramGrid
from snmplan.models import LinearGaussianModel, bundled_scenario
from snmplan.mong import clamp, entropy_histogram, gaussian_entropy, mong_at, negentropy
from snmplan.snm import (
    SnmLookupTable,
    estimate_lipschitz_constants,
    lipschitz_gap_bound,
    rrt_state_samples,
    snm_components_at,
    transition_tv_at,
    tv_histogram,
)

pytestmark = pytest.mark.slow

TABLE_NODES = 500
SAMPLES = 10_000
PLANNER_EPISODES = 100
SWEEP_EPISODES = 20
SMOKE_THRESHOLD = 0.105
SMOKE_PLANNERS = [
    {"type": "mcts", "budget": 100, "depth": 20},
    {"type": "mhfr", "nodes": 100, "depth": 20, "k_trees": 2},
    {"type": "snm", "budget": 100, "depth": 20, "nodes": 100, "k_trees": 2, "threshold": SMOKE_THRESHOLD},
]


def report(number, name, ok, detail):
    line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}: {name} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    assert ok, detail


def fmt(values):
    return "[" + ", ".join(f"{v:.4f}" for v in values) + "]"


# shared table sweeps


def _sweep(tmp_path_factory, collision):
    out = tmp_path_factory.mktemp("collision" if collision else "plain")
    config = ScenarioConfig(scenario="maze", noise_levels=list(NOISE_GRID), collision_dynamics=collision,
                            planners=[], seed=0)
    t0 = time.perf_counter()
    rows = measure_sweep(config, nodes=TABLE_NODES, samples=SAMPLES, tables_out=str(out))
    return rows, out, time.perf_counter() - t0


def _mong_means(rows, out, seed=11):
    """Clamped MoNG averaged over all table states at each level."""
    means = []
    for i, r in enumerate(rows):
        sc = bundled_scenario(r.scenario.split("-")[0]).with_noise(r.e_T, r.e_Z)
        if r.scenario.endswith("collision"):
            sc = replace(sc, collision_dynamics=True)
        model = sc.model()
        table = SnmLookupTable.load(out / f"{r.scenario}_eT{r.e_T:g}_eZ{r.e_Z:g}.json")
        streams = np.random.default_rng(seed + i).spawn(len(table))
        vals = [mong_at(model, s, model.actions, SAMPLES, g) for s, g in zip(table.states, streams)]
        means.append(float(np.mean([clamp(t) + clamp(z) for t, z in vals])))
    return means


@pytest.fixture(scope="module")
def empty_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("empty")
    config = ScenarioConfig(scenario="empty", noise_levels=list(NOISE_GRID), planners=[], seed=0)
    t0 = time.perf_counter()
    rows = measure_sweep(config, nodes=TABLE_NODES, samples=SAMPLES, tables_out=str(out))
    return rows, out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def maze_sweep(tmp_path_factory):
    return _sweep(tmp_path_factory, collision=False)


@pytest.fixture(scope="module")
def collision_sweep(tmp_path_factory):
    return _sweep(tmp_path_factory, collision=True)


@pytest.fixture(scope="module")
def smoke_config(tmp_path_factory):
    tables = tmp_path_factory.mktemp("smoke-tables")
    return ScenarioConfig(scenario="maze", noise_levels=[0.038], planners=SMOKE_PLANNERS, episodes=PLANNER_EPISODES,
                          max_steps=50, seed=0, table_dir=str(tables), build_tables=True, table_nodes=300,
                          table_samples=SAMPLES)


# criteria


def test_criterion_01_tv_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    tv = tv_histogram(rng.normal(0, 1, 100_000), rng.normal(1, 1, 100_000), HistogramGrid([-5.0], [6.0], 50))
    elapsed = time.perf_counter() - t0
    target = 2 * norm.cdf(0.5) - 1
    report(1, "TV estimator oracle", abs(tv - target) <= 0.02 and elapsed < 5,
           f"tv={tv:.4f} target={target:.4f} time={elapsed:.2f}s")


def test_criterion_02_linear_null():
    F = np.array([[1.0, 0.1], [0.0, 1.0]])
    model = LinearGaussianModel(F, np.array([[0.0], [0.1]]), np.eye(2), 0.01 * np.eye(2), 0.01 * np.eye(2),
                                [[-1.0], [0.0], [1.0]], [-100.0, -100.0], [100.0, 100.0])
    rng = np.random.default_rng(2)
    states = rrt_state_samples(model, np.zeros(2), 20, rng)
    psi_t, mong = [], []
    for s in states:
        psi_t.append(snm_components_at(model, s, model.actions, 100_000, 5, rng)[0])
        mt, mz = mong_at(model, s, model.actions, 100_000, rng)
        mong.append(clamp(mt) + clamp(mz))
    report(2, "linear-system null", max(psi_t) <= 0.05 and max(mong) <= 0.05,
           f"states={len(states)} max psi_T={max(psi_t):.4f} max MoNG={max(mong):.4f}")


def test_criterion_03_bound_verification():
    t0 = time.perf_counter()
    reports = random_bound_suite(count=100, perturbations=10, depth=3, seed=0)
    elapsed = time.perf_counter() - t0
    v_value = sum(r.value_slack < -1e-9 for r in reports)
    v_alpha = sum(r.alpha_slack < -1e-9 for r in reports)
    report(3, "value-loss and alpha-gap bounds", v_value == 0 and v_alpha == 0 and elapsed < 120,
           f"checks={len(reports)} value violations={v_value} alpha violations={v_alpha} time={elapsed:.1f}s")


def test_criterion_04_entropy_oracles():
    rng = np.random.default_rng(4)
    h_gauss = gaussian_entropy(1.0)
    u = rng.random(100_000)
    h_unif = entropy_histogram(u, HistogramGrid([0.0], [1.0], 50))
    j_unif = negentropy(u)
    ok = abs(h_gauss - 1.41894) <= 1e-5 and abs(h_unif) <= 0.05 and abs(j_unif - 0.176) <= 0.05
    # the stated 1e-6 tolerance is tighter than the 5-digit reference, so compare to the closed form too
    ok &= abs(h_gauss - 0.5 * math.log(2 * math.pi * math.e)) <= 1e-6
    report(4, "entropy oracles", ok, f"H(N(0,1))={h_gauss:.6f} H(U)={h_unif:.4f} J(U)={j_unif:.4f}")


def test_criterion_05_additive_sensor():
    sc = bundled_scenario("maze")
    states = rrt_state_samples(sc.model(), np.array(sc.start_state), 10, np.random.default_rng(5))
    worst_mong, psi_z = [], []
    for e in NOISE_GRID:
        model = sc.with_noise(e).model()
        rng = np.random.default_rng(int(e * 1e4))
        raw = [mong_at(model, s, model.actions[:1], SAMPLES, rng)[1] for s in states]
        worst_mong.append(max(abs(v) for v in raw))
        psi_z.append(float(np.mean([snm_components_at(model, s, model.actions[:1], SAMPLES, 5, rng)[1]
                                    for s in states])))
    ok = max(worst_mong) <= 0.02 and all(0 < p < 0.15 for p in psi_z)
    report(5, "additive sensor: MoNG zero, SNM small positive", ok,
           f"max |MoNG_Z| by level={fmt(worst_mong)} mean psi_Z by level={fmt(psi_z)}")


def test_criterion_06_noise_monotonicity(empty_sweep):
    rows, _, elapsed = empty_sweep
    snm = [r.snm for r in rows]
    monotone = all(b >= a for a, b in zip(snm, snm[1:]))
    rise = snm[-1] - snm[0]
    report(6, "empty-environment SNM rises with noise", monotone and rise >= 0.1 and elapsed < 600,
           f"snm by level={fmt(snm)} rise={rise:.4f} nondecreasing={monotone} time={elapsed:.0f}s")


def test_criterion_07_obstacle_sensitivity(empty_sweep, maze_sweep):
    e_rows, e_out, _ = empty_sweep
    m_rows, m_out, _ = maze_sweep
    e_snm, m_snm = [r.snm for r in e_rows], [r.snm for r in m_rows]
    e_mong, m_mong = _mong_means(e_rows, e_out), _mong_means(m_rows, m_out)
    gaps = [abs(a - b) for a, b in zip(e_mong, m_mong)]
    ok = all(m > e for m, e in zip(m_snm, e_snm)) and max(gaps) < 0.1
    report(7, "obstacles raise SNM, not MoNG", ok,
           f"maze snm={fmt(m_snm)} empty snm={fmt(e_snm)} |MoNG gap|={fmt(gaps)}")


def test_criterion_08_collision_sensitivity(maze_sweep, collision_sweep):
    plain = [r.snm for r in maze_sweep[0]]
    bounce = [r.snm for r in collision_sweep[0]]
    report(8, "collision dynamics raise maze SNM", all(b > p for b, p in zip(bounce, plain)),
           f"collision={fmt(bounce)} plain={fmt(plain)}")


def test_criterion_09_lipschitz_property():
    sc = bundled_scenario("maze")
    model = sc.model()
    lo, hi = model.state_space.lower, model.state_space.upper
    # free lower-left room, shrunk by footprint plus one step
    cell_lo = np.array([-0.85, -0.85, -3.0, -0.2])
    cell_hi = np.array([0.1, -0.35, 3.0, 0.2])
    rng = np.random.default_rng(9)

    def pair():
        s1 = cell_lo + rng.random(4) * (cell_hi - cell_lo)
        s2 = np.clip(s1 + (rng.random(4) - 0.5) * 0.1 * (hi - lo), cell_lo, cell_hi)
        return s1, s2

    def psi_t(s, g):
        return max(transition_tv_at(model, s, a, SAMPLES, g, 5) for a in model.actions)

    c_t, c_h = estimate_lipschitz_constants(model, [pair() for _ in range(20)], model.actions, SAMPLES, rng)
    s0 = pair()[0]
    se = float(np.std([psi_t(s0, np.random.default_rng(100 + i)) for i in range(20)], ddof=1))
    excess = []
    for _ in range(200):
        s1, s2 = pair()
        gap = abs(psi_t(s1, rng) - psi_t(s2, rng))
        excess.append(gap - lipschitz_gap_bound((s1 - lo) / (hi - lo), (s2 - lo) / (hi - lo), c_t, c_h))
    excess = np.array(excess)
    allowed = 2 * math.sqrt(2) * se
    rate = float(np.mean(excess > 0))
    ok = rate <= 0.05 and float(excess.max()) <= allowed
    report(9, "Lipschitz gap property", ok,
           f"C_T={c_t:.2f} C_That={c_h:.2f} violation rate={rate:.3f} max excess={excess.max():.4f} "
           f"allowed={allowed:.4f}")


def test_criterion_10_planner_smoke(smoke_config):
    t0 = time.perf_counter()
    rows = run_experiment(smoke_config, write=False)
    elapsed = time.perf_counter() - t0
    by = {r.planner: r for r in rows}
    best = max((by["mcts"], by["mhfr"]), key=lambda r: r.mean_return)
    pooled = math.hypot(by["snm"].ci_half_width, best.ci_half_width)
    frac = by["snm"].general_fraction
    ok = by["snm"].mean_return >= best.mean_return - pooled and 0 < frac < 1 and elapsed < 1800
    returns = " ".join(f"{p}={by[p].mean_return:.2f}+-{by[p].ci_half_width:.2f}" for p in ("mcts", "mhfr", "snm"))
    report(10, "switching planner smoke", ok,
           f"{returns} pooled={pooled:.2f} general fraction={frac:.3f} time={elapsed:.0f}s")


def test_criterion_11_threshold_shape(smoke_config):
    config = replace(smoke_config, episodes=SWEEP_EPISODES)
    thresholds = [round(0.1 * i, 1) for i in range(1, 10)]
    rows = sensitivity_sweep(config, thresholds, write=False)
    fracs = [r.general_fraction for r in rows]
    monotone = all(b <= a for a, b in zip(fracs, fracs[1:]))
    plateau = [r for r in rows if r.threshold in (0.3, 0.4, 0.5)]
    within = all(abs(a.mean_return - b.mean_return) <= max(a.ci_half_width, b.ci_half_width)
                 for a in plateau for b in plateau)
    report(11, "threshold sweep shape", monotone and within,
           f"fractions={fmt(fracs)} returns 0.3-0.5={fmt([r.mean_return for r in plateau])}")


def test_criterion_12_determinism(tmp_path):
    measure = ScenarioConfig(scenario="maze", noise_levels=[0.001, 0.075], planners=[], seed=3)
    runs = ScenarioConfig(scenario="maze", noise_levels=[0.038], planners=SMOKE_PLANNERS, episodes=2, max_steps=3,
                          seed=3, table_dir=str(tmp_path / "tables"), build_tables=True, table_nodes=20,
                          table_samples=1000)
    same = []
    for jobs in (1, 2):
        a = rows_to_csv(measure_sweep(measure, nodes=20, samples=1000, jobs=jobs))
        b = rows_to_csv(run_experiment(runs, jobs=jobs, write=False))
        c = rows_to_csv([r.__dict__ for r in random_bound_suite(3, 2, 2, seed=3)])
        same.append((a, b, c))
    repeat = rows_to_csv(run_experiment(runs, jobs=1, write=False))
    ok = same[0] == same[1] and repeat == same[0][1]
    report(12, "byte-identical CSV across jobs", ok,
           f"measure={same[0][0] == same[1][0]} run={same[0][1] == same[1][1]} bounds={same[0][2] == same[1][2]}")
