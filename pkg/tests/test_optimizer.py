import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risirm.dataset import default_environments, generate_environment
from risirm.optimizer import (MAX_ENUMERATION_K, LinkBudget, PhaseCodebook, PhaseConfig, best_config,
                              binary_codebook, brute_force_binary, continuous_optimum_snr, default_codebook,
                              matched_phases, rate, snr, snr_batch)

UNIT = LinkBudget(transmit_power=2.0, bandwidth=1.0, noise_psd=2.0)


def _pair(rng, K, scale=1.0):
    h = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) * scale
    g = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) * scale
    return h, g


def test_phase_config_wraps_and_is_read_only():
    c = PhaseConfig(np.array([2 * math.pi + 0.5, -0.5]))
    assert c.phases == pytest.approx([0.5, 2 * math.pi - 0.5])
    with pytest.raises(ValueError):
        c.phases[0] = 1.0


def test_default_codebook_classes():
    book = default_codebook(6)
    assert book.class_ids == [1, 2]
    assert np.all(book.config_for(1).phases == 0)
    assert np.allclose(book.config_for(2).phases, [0, math.pi] * 3)


def test_unit_snr():
    assert snr(PhaseConfig(np.zeros(1)), [1.0], [1.0], UNIT) == 1.0


def test_snr_is_2pi_periodic():
    rng = np.random.default_rng(0)
    h, g = _pair(rng, 8)
    phi = rng.uniform(0, 2 * math.pi, 8)
    assert snr(PhaseConfig(phi), h, g) == pytest.approx(snr(PhaseConfig(phi + 2 * math.pi), h, g), rel=1e-12)


def test_snr_matches_direct_recomputation_on_env1_sample():
    env = default_environments()["env1"]
    s = generate_environment(env, 1)[0]
    book = default_codebook(env.K)
    budget = LinkBudget()
    for cid in book.class_ids:
        phi = book.config_for(cid).phases
        acc = 0j
        for k in range(env.K):
            acc += s.g[k].conjugate() * complex(math.cos(phi[k]), math.sin(phi[k])) * s.h[k]
        direct = abs(acc) ** 2 * budget.transmit_power / (budget.bandwidth * budget.noise_psd)
        assert snr(book.config_for(cid), s.h, s.g, budget) == pytest.approx(direct, rel=1e-12)


def test_snr_batch_agrees_with_snr():
    rng = np.random.default_rng(1)
    h, g = _pair(rng, 5)
    rows = rng.uniform(0, 2 * math.pi, (7, 5))
    batch = snr_batch(rows, h, g)
    assert batch == pytest.approx([snr(PhaseConfig(r), h, g) for r in rows], rel=1e-12)


def test_snr_length_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        snr(PhaseConfig(np.zeros(3)), np.ones(4), np.ones(4))


@pytest.mark.parametrize("value, bandwidth, expect", [(0.0, 1.0, 0.0), (1.0, 1.0, 1.0), (3.0, 2.0, 4.0)])
def test_rate(value, bandwidth, expect):
    # a one-element link whose SNR equals ``value`` exactly
    budget = LinkBudget(transmit_power=1.0, bandwidth=bandwidth, noise_psd=1.0 / bandwidth)
    assert rate(PhaseConfig(np.zeros(1)), [math.sqrt(value)], [1.0], budget) == pytest.approx(expect)


def test_aligned_channel_picks_class_1():
    h = np.linspace(1, 2, 6).astype(complex)
    assert best_config(default_codebook(6), h, np.ones(6))[0] == 1


def test_alternating_channel_picks_class_2():
    profile = np.linspace(1, 2, 6)
    h = profile * (-1.0) ** np.arange(6)
    book = default_codebook(6)
    assert best_config(book, h, np.ones(6))[0] == 2
    assert snr(book.config_for(2), h, np.ones(6)) > snr(book.config_for(1), h, np.ones(6))


def test_single_entry_codebook():
    c = PhaseConfig(np.array([0.3, 1.2]))
    cid, cfg, _ = best_config(PhaseCodebook((c,)), [1.0, 1j], [1.0, 1.0])
    assert (cid, cfg) == (1, c)


def test_ties_go_to_lowest_id():
    book = default_codebook(2)
    # second element zero: both classes give the same SNR
    assert best_config(book, [1.0, 0.0], [1.0, 1.0])[0] == 1


def test_brute_force_single_element():
    cfg, value = brute_force_binary([1j], [1.0])
    assert value == pytest.approx(snr(PhaseConfig(np.zeros(1)), [1j], [1.0]))


def test_brute_force_beats_two_entry_codebook():
    rng = np.random.default_rng(4)
    h, g = _pair(rng, 8)
    assert brute_force_binary(h, g)[1] >= best_config(default_codebook(8), h, g)[2]


def test_brute_force_equals_independent_enumeration():
    rng = np.random.default_rng(5)
    h, g = _pair(rng, 8)
    best = 0.0
    for bits in itertools.product((math.pi, 0.0), repeat=8):  # reversed loop order
        best = max(best, snr(PhaseConfig(np.array(bits[::-1])), h, g))
    assert brute_force_binary(h, g)[1] == best


def test_brute_force_limit():
    with pytest.raises(ValueError, match="enumeration too large"):
        brute_force_binary(np.ones(MAX_ENUMERATION_K + 1), np.ones(MAX_ENUMERATION_K + 1))


def test_binary_codebook_contents():
    book = binary_codebook(3)
    assert len(book) == 8
    assert np.all(book.config_for(1).phases == 0)
    assert np.allclose(book.config_for(2).phases, [0, math.pi, 0])


def test_continuous_bound_single_element():
    h, g = [0.3 + 0.4j], [1.0 - 1.0j]
    assert continuous_optimum_snr(h, g, UNIT) == pytest.approx(abs(g[0]) ** 2 * abs(h[0]) ** 2, rel=1e-14)


def test_matched_phases_attain_bound():
    rng = np.random.default_rng(6)
    for K in (1, 4, 100):
        h, g = _pair(rng, K)
        assert snr(matched_phases(h, g), h, g) == pytest.approx(continuous_optimum_snr(h, g), rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_bound_holds_for_random_configs(K, seed):
    rng = np.random.default_rng(seed)
    h, g = _pair(rng, K)
    bound = continuous_optimum_snr(h, g)
    assert snr(PhaseConfig(rng.uniform(0, 2 * math.pi, K)), h, g) <= bound
    assert best_config(default_codebook(K), h, g)[2] <= bound


def test_link_budget_validation():
    with pytest.raises(ValueError):
        LinkBudget(noise_psd=0.0)
