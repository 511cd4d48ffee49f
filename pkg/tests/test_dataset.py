import dataclasses
import hashlib
import json
import math

import numpy as np
import pytest

from conftest import fake_env
from risirm.channel import ChannelDraw, tx_ris_los_channel
from risirm.dataset import (Z_DIM, ChannelSample, Dataset, EnvironmentSpec, MixSpec, balanced_subset,
                            csi_features, default_environments, extract_representation, fit_standardization,
                            generate_environment, load_jsonl, mix_training_set, save_jsonl)
from risirm.geometry import GeometryError, Point3, spherical_from_point


@pytest.fixture(scope="module")
def env1_small(envs):
    return generate_environment(envs["env1"], 200)


def test_thousand_samples_are_valid(envs):
    d = generate_environment(envs["env1"], 1000)
    assert len(d) == 1000
    assert np.all(np.isfinite(d.X)) and np.all(np.isfinite(d.Z))
    assert set(d.labels) <= {1, 2}
    assert d.X.shape == (1000, 400)
    assert d.Z.shape == (1000, Z_DIM)


def test_both_labels_in_every_environment(envs):
    for name, spec in envs.items():
        counts = np.bincount(generate_environment(spec, 300).labels, minlength=3)[1:]
        assert counts.min() > 60, name


def test_without_scatterers_h_is_the_los_component(envs):
    spec = dataclasses.replace(envs["env1"], scatterer_count=0)
    d = generate_environment(spec, 5)
    for i, s in enumerate(d):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        rng.uniform(size=2)  # the RX position draw
        draw = ChannelDraw.sample(rng, 0)
        los = tx_ris_los_channel(spec.grid, spherical_from_point(spec.frame, spec.tx_position), draw)
        assert np.array_equal(s.h, los)


def test_generation_is_deterministic(envs, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_jsonl(generate_environment(envs["env2"], 20), a)
    save_jsonl(generate_environment(envs["env2"], 20), b)
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()


def test_sample_depends_only_on_its_index(envs):
    full = generate_environment(envs["env3"], 6)
    tail = generate_environment(envs["env3"], 2, start=4)
    assert np.array_equal(full[5].h, tail[1].h)


def test_representation_on_boresight(envs):
    spec = envs["env1"]
    rx = Point3(spec.ris_position.x, spec.ris_position.y + 2.0, spec.ris_position.z)
    z = extract_representation(spec, rx)
    assert z[5] == 0.0 and z[6] == 0.0 and z[9] == 2.0
    assert z[4] == pytest.approx(11.180339887, abs=1e-9)


def test_rx_arrival_mirrors_ris_departure(envs):
    spec = envs["env1"]
    z = extract_representation(spec, Point3(8.0, 33.0, 1.5))
    assert z[7] == pytest.approx(z[5], abs=1e-12)
    assert z[8] == pytest.approx(-z[6], abs=1e-12)


def test_representation_unchanged_by_sample_order(env1_small):
    perm = np.random.default_rng(0).permutation(len(env1_small))
    shuffled = Dataset([env1_small[i] for i in perm])
    assert np.array_equal(shuffled.Z, env1_small.Z[perm])


def test_csi_feature_layout():
    x = csi_features(np.array([1 + 2j, 3 + 4j]), np.array([5 + 6j, 7 + 8j]))
    assert x.tolist() == [1, 2, 3, 4, 5, 6, 7, 8]


def test_environment_regions_and_seeds(envs):
    assert list(envs) == ["env1", "env2", "env3"]
    ris = envs["env1"].ris_position
    dists = [round(e.rx_region_center.distance_to(ris), 9) for e in envs.values()]
    assert dists == [2.0, 6.0, 4.0]
    assert len({e.seed for e in envs.values()}) == 3


def test_region_over_ris_rejected(envs):
    with pytest.raises(GeometryError):
        dataclasses.replace(envs["env1"], rx_region_center=Point3(10.5, 30.2, 1.0))


def test_mix_counts_balanced_default():
    mix = MixSpec(600, 0.5, 0.5)
    assert mix.cell_counts() == {(0, 1): 150, (0, 2): 150, (1, 1): 150, (1, 2): 150}


def test_mix_extremes():
    d1, d2 = fake_env("env1", 400), fake_env("env2", 400)
    only1 = mix_training_set(d1, d2, MixSpec(100, 1.0, 0.5))
    assert {s.env_id for s in only1} == {"env1"}
    corr = mix_training_set(d1, d2, MixSpec(100, 0.5, 1.0))
    assert {s.label_class for s in corr if s.env_id == "env1"} == {1}
    assert {s.label_class for s in corr if s.env_id == "env2"} == {2}


def test_mix_is_without_replacement_and_seeded():
    d1, d2 = fake_env("env1", 200), fake_env("env2", 200)
    a = mix_training_set(d1, d2, MixSpec(300, 0.3, 0.6, seed=4))
    b = mix_training_set(d1, d2, MixSpec(300, 0.3, 0.6, seed=4))
    assert len(a.keys()) == 300
    assert [s.sample_index for s in a] == [s.sample_index for s in b]


def test_mix_insufficient_cell_is_named():
    d1, d2 = fake_env("env1", 10), fake_env("env2", 10)
    with pytest.raises(ValueError, match=r"\(env1, CLASS#1\)"):
        mix_training_set(d1, d2, MixSpec(100, 1.0, 1.0))


def test_mix_respects_exclusions():
    d1, d2 = fake_env("env1", 100), fake_env("env2", 100)
    train = mix_training_set(d1, d2, MixSpec(100, 0.5, 0.5, seed=1))
    test = mix_training_set(d1, d2, MixSpec(100, 0.5, 0.5, seed=2), exclude=train.keys())
    assert not train.keys() & test.keys()


def test_balanced_subset():
    d = Dataset(fake_env("e", 30).samples + fake_env("e", 10).samples[:7])
    b = balanced_subset(d, seed=1)
    assert np.bincount(b.labels).tolist()[1:] == [b.labels.tolist().count(1)] * 2


def test_standardization_keeps_constant_columns():
    mean, std = fit_standardization([[1.0, 5.0], [3.0, 5.0]])
    assert mean.tolist() == [2.0, 5.0]
    assert std.tolist() == [1.0, 1.0]


def test_jsonl_round_trip(env1_small, tmp_path):
    part = Dataset(env1_small.samples[:100])
    path = tmp_path / "d.jsonl"
    save_jsonl(part, path)
    back = load_jsonl(path)
    for a, b in zip(part, back):
        assert np.array_equal(a.h, b.h) and np.array_equal(a.g, b.g) and np.array_equal(a.z, b.z)
        assert (a.label_class, a.best_snr, a.env_id, a.sample_index) == (b.label_class, b.best_snr, b.env_id,
                                                                          b.sample_index)
    first = json.loads(path.read_text().splitlines()[0])
    assert list(first) == ["env", "idx", "h_re", "h_im", "g_re", "g_im", "z", "class", "phases", "best_snr"]


def test_empty_jsonl_round_trip(tmp_path):
    path = tmp_path / "empty.jsonl"
    save_jsonl(Dataset(), path)
    assert path.read_text() == ""
    assert len(load_jsonl(path)) == 0


def test_truncated_line_is_reported(env1_small, tmp_path):
    path = tmp_path / "bad.jsonl"
    save_jsonl(Dataset(env1_small.samples[:10]), path)
    lines = path.read_text().splitlines()
    lines[6] = lines[6][: len(lines[6]) // 2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="line 7"):
        load_jsonl(path)


def test_sample_json_rejects_inconsistent_lengths(env1_small):
    doc = env1_small[0].to_json()
    doc["z"] = doc["z"][:5]
    with pytest.raises(ValueError):
        ChannelSample.from_json(doc)


def test_unknown_feature_kind(env1_small):
    with pytest.raises(ValueError):
        env1_small.features("csi")


def test_spec_serialises(envs):
    d = envs["env3"].to_dict()
    assert d["id"] == "env3" and d["ris_rows"] * d["ris_cols"] == 100
    assert math.isclose(d["carrier_frequency"], 28e9)


def test_default_environments_accept_custom_distances():
    envs = default_environments(distances={"a": 3.0})
    assert list(envs) == ["a"]
