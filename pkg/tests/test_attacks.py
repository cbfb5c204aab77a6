import numpy as np
import pytest

from otatti.attacks import AttackSpec, attack_local_round, clip_norm, neurotoxin_mask
from otatti.data import PartitionSpec, TriggerSpec, dirichlet_partition, generate_dataset, poison_dataset
from otatti.errors import ConfigurationError
from otatti.model import TrainConfig, init_model, local_train


@pytest.fixture(scope="module")
def setup():
    data = generate_dataset(4, 8, 60, 0.2, seed=3)
    poisoned = poison_dataset(data, TriggerSpec((6, 7), 2.0, 0, poison_rate=0.5), seed=1)
    model = init_model((8, [12], 4), seed=2)
    model, _ = local_train(model, data, TrainConfig(local_epochs=2, seed=9))
    return model, data, poisoned


def test_clip_examples():
    assert np.allclose(clip_norm(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    assert np.array_equal(clip_norm(np.array([0.3, 0.4]), 1.0), [0.3, 0.4])
    assert np.array_equal(clip_norm(np.zeros(3), 0.5), np.zeros(3))
    with pytest.raises(ConfigurationError):
        clip_norm(np.ones(2), 0.0)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        AttackSpec("label_flip")
    with pytest.raises(ConfigurationError):
        AttackSpec("bounded_scaling", scale_factor=1.0)
    with pytest.raises(ConfigurationError):
        AttackSpec("euclidean_constrained", alpha_mix=1.5)
    with pytest.raises(ConfigurationError):
        AttackSpec("neurotoxin", mask_top_fraction=1.0)


def test_bounded_scaling_respects_bound(setup):
    model, _, poisoned = setup
    upd = attack_local_round(model, poisoned, AttackSpec("bounded_scaling"), TrainConfig(seed=1), norm_bound=0.05)
    assert np.linalg.norm(upd.delta) == pytest.approx(0.05)
    _, raw = local_train(model, poisoned, TrainConfig(seed=1))
    cos = upd.delta @ raw.delta / np.linalg.norm(upd.delta) / np.linalg.norm(raw.delta)
    assert cos == pytest.approx(1.0)


def test_bounded_scaling_default_bound_is_raw_norm(setup):
    model, _, poisoned = setup
    upd = attack_local_round(model, poisoned, AttackSpec("bounded_scaling"), TrainConfig(seed=1))
    _, raw = local_train(model, poisoned, TrainConfig(seed=1))
    assert np.linalg.norm(upd.delta) == pytest.approx(np.linalg.norm(raw.delta))


def test_euclidean_pull_shrinks_update(setup):
    model, _, poisoned = setup
    cfg = TrainConfig(seed=4)
    free = attack_local_round(model, poisoned, AttackSpec("euclidean_constrained", alpha_mix=0.0), cfg)
    pulled = attack_local_round(model, poisoned, AttackSpec("euclidean_constrained", alpha_mix=1.0), cfg)
    assert np.linalg.norm(pulled.delta) < np.linalg.norm(free.delta)


def test_cosine_pull_aligns_with_anchor():
    wins = 0
    for seed in range(10):
        data = generate_dataset(4, 8, 40, 0.2, seed=seed)
        poisoned = poison_dataset(data, TriggerSpec((6, 7), 2.0, 0, poison_rate=0.5), seed=seed)
        model = init_model((8, [12], 4), seed=seed)
        cfg = TrainConfig(seed=seed)
        w = model.params

        def final_cos(alpha):
            upd = attack_local_round(model, poisoned, AttackSpec("cosine_constrained", alpha_mix=alpha), cfg)
            after = w + upd.delta
            return after @ w / np.linalg.norm(after) / np.linalg.norm(w)

        wins += final_cos(0.9) >= final_cos(0.0)
    assert wins >= 8


def test_neurotoxin_mask_drops_top(rng):
    hint = np.array([0.1, -5.0, 0.2, 3.0, 0.0])
    assert neurotoxin_mask(hint, 0.4).tolist() == [True, False, True, False, True]
    assert neurotoxin_mask(np.ones(4), 0.5).tolist() == [False, False, True, True]


def test_neurotoxin_update_sparse(setup, rng):
    model, _, poisoned = setup
    hint = rng.normal(size=model.size)
    spec = AttackSpec("neurotoxin", mask_top_fraction=0.9)
    upd = attack_local_round(model, poisoned, spec, TrainConfig(seed=2), hint)
    masked = ~neurotoxin_mask(hint, 0.9)
    assert np.all(upd.delta[masked] == 0.0)
    assert np.any(upd.delta[~masked] != 0.0)


def test_neurotoxin_needs_hint(setup):
    model, _, poisoned = setup
    with pytest.raises(ConfigurationError):
        attack_local_round(model, poisoned, AttackSpec("neurotoxin"), TrainConfig())


def test_attacks_learn_trigger():
    parts = dirichlet_partition(generate_dataset(4, 8, 80, 0.2, seed=1), PartitionSpec(2, 100.0, seed=1))
    trig = TriggerSpec((6, 7), 3.0, 0, poison_rate=0.5)
    poisoned = poison_dataset(parts[0], trig, seed=2)
    model = init_model((8, [12], 4), seed=2)
    for _ in range(10):
        upd = attack_local_round(model, poisoned, AttackSpec("euclidean_constrained", alpha_mix=0.1), TrainConfig(local_epochs=3))
        model = model.with_params(model.params + upd.delta)
    test = generate_dataset(4, 8, 50, 0.2, seed=5)
    keep = test.labels != 0
    x = test.features[keep].copy()
    x[:, [6, 7]] += 3.0
    assert np.mean(model.predict(x) == 0) >= 0.8


def test_bounded_scaling_clip_inactive(setup):
    model, _, poisoned = setup
    _, raw = local_train(model, poisoned, TrainConfig(seed=1))
    spec = AttackSpec("bounded_scaling", scale_factor=3.0)
    upd = attack_local_round(model, poisoned, spec, TrainConfig(seed=1), norm_bound=10 * np.linalg.norm(raw.delta))
    assert np.array_equal(upd.delta, 3.0 * raw.delta)


def test_bounded_scaling_huge_scale_hits_bound(setup):
    model, _, poisoned = setup
    spec = AttackSpec("bounded_scaling", scale_factor=1e6)
    upd = attack_local_round(model, poisoned, spec, TrainConfig(seed=1), norm_bound=0.3)
    assert abs(np.linalg.norm(upd.delta) - 0.3) <= 1e-9


def test_neurotoxin_flat_hint_trains_everything(setup):
    model, _, poisoned = setup
    upd = attack_local_round(model, poisoned, AttackSpec("neurotoxin"), TrainConfig(seed=2), np.ones(model.size))
    _, plain = local_train(model, poisoned, TrainConfig(seed=2))
    assert np.array_equal(upd.delta, plain.delta)
