"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The training experiments (criteria 5-8) share cached session fixtures, so
the whole module takes several minutes on one core.
"""

import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import fake_env, record
from risirm import autodiff as ad
from risirm import cli
from risirm import config as C
from risirm import experiment as X
from risirm.causal import class1_rate, do_probability, generate_do_samples, point_mass
from risirm.dataset import MixSpec, fit_standardization, generate_environment, mix_training_set
from risirm.evaluation import predict_classes, se_gap
from risirm.optimizer import (LinkBudget, PhaseConfig, best_config, binary_codebook, brute_force_binary,
                              continuous_optimum_snr, default_codebook, snr)
from risirm.predictor import LossCfg, MlpArch, forward_tensor, init, loss_tensor
from risirm.training import TrainCfg, eq9_radical, irm_step_objective

SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="module")
def cfg():
    return C.load()


@pytest.fixture(scope="module")
def data(cfg):
    return X.generate_all(cfg)


@pytest.fixture(scope="module")
def ood_runs(cfg, data):
    """Env3 rows for each (alpha_c, seed) with the default protocol."""
    out, elapsed = {}, {}
    for ac in (0.5, 0.8):
        t0 = time.perf_counter()
        for s in SEEDS:
            _, rows = X.run_pair(cfg, data, s, alpha_c=ac)
            out[ac, s] = rows
        elapsed[ac] = time.perf_counter() - t0
    return out, elapsed


def _acc(runs, ac, method):
    return np.array([X.mean_accuracy(runs[ac, s], method) for s in SEEDS])


# -- 1 ------------------------------------------------------------------------

def test_c1_autodiff_matches_finite_differences(envs):
    t0 = time.perf_counter()
    d1 = generate_environment(envs["env1"], 16)
    d2 = generate_environment(envs["env2"], 16)
    arch = MlpArch(10, seed=0)
    assert arch.n_params == 744
    mean, std = fit_standardization(np.concatenate([d1.Z, d2.Z]))
    params = init(arch, mean, std)
    batch = [(params.standardize(d.Z), d.phases) for d in (d1, d2)]

    def objective(w):
        return irm_step_objective(arch, w, batch, 10.0, TrainCfg(), LossCfg())

    w = params.w
    grad = ad.gradient(objective, w)
    step = 1e-5
    fd = np.empty_like(grad)
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = step
        fd[i] = (ad.value_and_gradient(objective, w + e)[0] - ad.value_and_gradient(objective, w - e)[0]) / (2 * step)
    grad_err = np.max(np.abs(grad - fd)) / np.max(np.abs(fd))

    v = np.random.default_rng(1).standard_normal(len(w))
    hvp = ad.hessian_vector_product(objective, w, v)
    fd_hvp = (ad.gradient(objective, w + step * v) - ad.gradient(objective, w - step * v)) / (2 * step)
    hvp_err = np.max(np.abs(hvp - fd_hvp)) / np.max(np.abs(fd_hvp))
    elapsed = time.perf_counter() - t0

    ok = grad_err < 1e-6 and hvp_err < 1e-4 and elapsed < 10.0
    record(1, ok, f"grad rel err {grad_err:.2e} (<1e-6), HVP rel err {hvp_err:.2e} (<1e-4), {elapsed:.1f} s (<10 s)")
    assert grad_err < 1e-6
    assert hvp_err < 1e-4
    assert elapsed < 10.0


# -- 2 ------------------------------------------------------------------------

def test_c2_eq9_radical_is_gradient_norm():
    rng = np.random.default_rng(7)
    arch = MlpArch(10, (16, 4), 100)
    worst = 0.0
    for _ in range(100):
        params = init(arch).with_weights(rng.normal(0, 0.5, arch.n_params))
        x = rng.standard_normal(10)
        target = rng.uniform(0, 2 * np.pi, 100)
        lam = rng.uniform(0.1, 20)
        scale = rng.uniform(0.5, 3)
        loss_cfg = LossCfg(scale)
        radical = eq9_radical(params, x, target, lam, loss_cfg)

        def sample_loss(w):
            return loss_tensor(target[None], forward_tensor(arch, w, params.standardize(x[None])), loss_cfg).sum()

        norm = np.linalg.norm(ad.gradient(sample_loss, params.w))
        worst = max(worst, abs(radical - lam * norm) / (lam * norm))
    ok = worst < 1e-10
    record(2, ok, f"max relative gap over 100 points {worst:.2e} (<1e-10)")
    assert ok


# -- 3 ------------------------------------------------------------------------

def test_c3_codebook_search_equals_brute_force():
    rng = np.random.default_rng(11)
    budget = LinkBudget()
    mismatches = total = 0
    for K in range(1, 11):
        book = binary_codebook(K)
        for _ in range(200):
            h = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) * 1e-4
            g = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) * 1e-4
            _, _, s_book = best_config(book, h, g, budget)
            _, s_brute = brute_force_binary(h, g, budget)
            mismatches += s_book != s_brute
            total += 1
    record(3, mismatches == 0, f"{total - mismatches}/{total} exact SNR matches for K=1..10, 200 draws each")
    assert mismatches == 0


# -- 4 ------------------------------------------------------------------------

def test_c4_no_configuration_beats_continuous_optimum():
    rng = np.random.default_rng(12)
    budget = LinkBudget()
    violations = evaluated = 0
    for i in range(10_000):
        K = int(rng.integers(1, 9))
        h = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) * 10 ** rng.uniform(-6, -2)
        g = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) * 10 ** rng.uniform(-6, -2)
        bound = continuous_optimum_snr(h, g, budget)
        candidates = [snr(c, h, g, budget) for c in default_codebook(K).entries]
        candidates.append(snr(PhaseConfig(rng.uniform(0, 2 * np.pi, K)), h, g, budget))
        candidates.append(brute_force_binary(h, g, budget)[1])
        violations += sum(s > bound for s in candidates)
        evaluated += len(candidates)
    record(4, violations == 0, f"{violations} violations among {evaluated} configurations over 10^4 draws")
    assert violations == 0


# -- 5 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c5_irm_beats_erm_out_of_distribution(ood_runs):
    runs, elapsed = ood_runs
    irm, erm = _acc(runs, 0.5, "IRM"), _acc(runs, 0.5, "ERM")
    ok = irm.mean() >= erm.mean() and irm.mean() >= 0.85 and elapsed[0.5] < 900
    record(5, ok, f"Env3 accuracy IRM {irm.mean():.4f} vs ERM {erm.mean():.4f} (IRM>=ERM, IRM>=0.85); "
                  f"per seed IRM {np.round(irm, 3).tolist()} ERM {np.round(erm, 3).tolist()}; "
                  f"{elapsed[0.5]:.0f} s (<900 s)")
    assert irm.mean() >= erm.mean()
    assert irm.mean() >= 0.85
    assert elapsed[0.5] < 900


# -- 6 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c6_biased_mix_degrades_both(ood_runs):
    runs, _ = ood_runs
    irm5, erm5 = _acc(runs, 0.5, "IRM"), _acc(runs, 0.5, "ERM")
    irm8, erm8 = _acc(runs, 0.8, "IRM"), _acc(runs, 0.8, "ERM")
    ok = irm8.mean() < irm5.mean() and erm8.mean() < erm5.mean() and irm8.mean() >= erm8.mean()
    record(6, ok, f"alpha_c 0.8: IRM {irm8.mean():.4f} (was {irm5.mean():.4f}), ERM {erm8.mean():.4f} "
                  f"(was {erm5.mean():.4f}); IRM>=ERM on {int(np.sum(irm8 >= erm8))}/5 seeds")
    assert irm8.mean() < irm5.mean()
    assert erm8.mean() < erm5.mean()
    assert irm8.mean() >= erm8.mean()


# -- 7 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c7_irm_closer_to_best_at_300_samples(cfg, data):
    gaps = {"IRM": [], "ERM": []}
    for s in SEEDS:
        rows = X.sweep_samples(cfg, data, s, sizes=[300])
        for m in gaps:
            gaps[m].append(se_gap(rows, m, 300))
    irm, erm = np.mean(gaps["IRM"]), np.mean(gaps["ERM"])
    ok = irm < erm
    record(7, ok, f"SE gap to BEST at 300 samples: IRM {irm:.4%} vs ERM {erm:.4%}")
    assert ok


# -- 8 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def intervention(cfg):
    return X.intervene(cfg, seed=0)


@pytest.mark.slow
def test_c8_intervention_estimator(cfg, intervention):
    model, rows = intervention
    env = C.environments(cfg)["env3"]
    exact = True
    for z in (-50.0, -22.22222222222222, 0.0, 27.77777777777778):
        spec = point_mass(z, base_n=200)
        prob, _ = do_probability(model, spec, env, seed=5)
        direct = class1_rate(predict_classes(model, generate_do_samples(env, spec.support_deg[
            int(np.argmax(spec.weights))], 200, seed=5), default_codebook(env.K)))
        exact &= prob == direct
    worst = max(r["deviation"] for r in rows)
    ok = exact and len(rows) == 5 and worst < 0.05
    detail = ", ".join(f"{r['scenario']} {r['deviation']:.4f}" for r in rows)
    record(8, ok, f"point mass exact: {exact}; |pred - BEST| per scenario (<0.05): {detail}")
    assert exact
    assert len(rows) == 5
    assert worst < 0.05


# -- 9 ------------------------------------------------------------------------

SMALL = """\
samples_per_environment: 300
environments:
  env1: {distance: 2.0}
  env2: {distance: 6.0}
  env3: {distance: 4.0}
train: {n: 100, epochs: 3}
sweep: {n_test: 20, sizes: [40]}
intervene: {base_samples: 60, n: 40}
"""


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_c9_every_subcommand_replays_byte_identically(tmp_path):
    conf = tmp_path / "small.yaml"
    conf.write_text(SMALL)
    o = tmp_path
    common = ["--config", str(conf), "--seed", "3"]
    runs = {
        "gen-data": ["gen-data", *common, "--out", str(o / "data")],
        "train-erm": ["train", *common, "--data", str(o / "data"), "--method", "erm", "--out", str(o / "erm")],
        "train-irm": ["train", *common, "--data", str(o / "data"), "--method", "irm", "--out", str(o / "irm"),
                      "--lambda", "5", "--penalty-mode", "per_environment", "--alpha-c", "0.6"],
        "eval": ["eval", *common, "--data", str(o / "data"), "--erm", str(o / "erm/erm.json"),
                 "--irm", str(o / "irm/irm.json"), "--out", str(o / "eval")],
        "sweep-ood": ["sweep-ood", *common, "--data", str(o / "data"), "--erm", str(o / "erm/erm.json"),
                      "--irm", str(o / "irm/irm.json"), "--out", str(o / "ood")],
        "sweep-samples": ["sweep-samples", *common, "--data", str(o / "data"), "--out", str(o / "samples")],
        "intervene": ["intervene", *common, "--out", str(o / "intervene")],
        "plot": ["plot", "--out", str(o / "plots"), str(o / "eval/eval.csv")],
    }
    same, compared = [], 0
    for name, argv in runs.items():
        assert cli.main(argv) == 0, name
        out = Path(argv[argv.index("--out") + 1])
        again = tmp_path / f"replay-{name}"
        cli.replay(out / cli.MANIFEST, again)
        tables = sorted(p for p in out.iterdir() if p.suffix in (".csv", ".jsonl"))
        for p in tables:
            compared += 1
            assert (again / p.name).exists(), p.name
        identical = all(_digest(p) == _digest(again / p.name) for p in tables)
        same.append(identical)
    ok = all(same)
    record(9, ok, f"{sum(same)}/{len(same)} subcommands replayed identically ({compared} CSV/JSONL files)")
    assert ok


# -- 10 -----------------------------------------------------------------------

def test_c10_mixing_counts_are_exact():
    d1, d2 = fake_env("env1", 650), fake_env("env2", 650)
    grid = (0.0, 0.25, 0.5, 0.75, 1.0)
    bad = []
    for N in (600, 300, 7):
        for ae in grid:
            for ac in grid:
                expect = {
                    ("env1", 1): np.floor(N * ae * ac + 0.5),
                    ("env1", 2): np.floor(N * ae * (1 - ac) + 0.5),
                    ("env2", 1): np.floor(N * (1 - ae) * (1 - ac) + 0.5),
                    ("env2", 2): np.floor(N * (1 - ae) * ac + 0.5),
                }
                residue = N - sum(expect.values())
                expect[max(expect, key=expect.get)] += residue
                mix = mix_training_set(d1, d2, MixSpec(N, ae, ac, seed=1))
                got = {k: 0 for k in expect}
                for s in mix:
                    got[s.env_id, s.label_class] += 1
                if got != {k: int(v) for k, v in expect.items()}:
                    bad.append((N, ae, ac))
    record(10, not bad, f"{75 - len(bad)}/75 (N, alpha_e, alpha_c) grid points with exact per-cell counts")
    assert not bad
