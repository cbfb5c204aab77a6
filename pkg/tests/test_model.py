import numpy as np
import pytest

from otatti.data import LabeledDataset, generate_dataset
from otatti.errors import ConfigurationError, ShapeError
from otatti.model import (
    LossSpec,
    ModelDims,
    TrainConfig,
    forward_loss_grad,
    init_model,
    local_train,
    slice_layers,
    whole_model_map,
)


def small_batch(rng, width=4, classes=3, n=9):
    return rng.normal(size=(n, width)), rng.integers(0, classes, size=n)


def finite_diff(model, batch, spec, h=1e-4):
    grad = np.empty(model.size)
    for i in range(model.size):
        p = model.params.copy()
        p[i] += h
        up, _ = forward_loss_grad(model.with_params(p), batch, spec)
        p[i] -= 2 * h
        down, _ = forward_loss_grad(model.with_params(p), batch, spec)
        grad[i] = (up - down) / (2 * h)
    return grad


def test_init_deterministic_and_sized():
    a = init_model((8, [16], 10), seed=7)
    b = init_model((8, [16], 10), seed=7)
    assert np.array_equal(a.params, b.params)
    assert a.size == 314
    assert len(a.layer_map) == 4
    assert sum(s.length for s in a.layer_map) == 314


def test_init_bounds():
    m = init_model((8, [16], 10), seed=1)
    w1 = m.params[m.layer_map[0].start:m.layer_map[0].stop]
    assert np.all(np.abs(w1) <= 1 / np.sqrt(8))


@pytest.mark.parametrize("dims", [(8, [0], 10), (0, [4], 3), (4, [4], 1)])
def test_init_rejects_degenerate(dims):
    with pytest.raises(ConfigurationError):
        init_model(dims, seed=0)


@pytest.mark.parametrize(
    "spec_factory",
    [
        lambda anchor: LossSpec(),
        lambda anchor: LossSpec("euclidean", 0.3, anchor),
        lambda anchor: LossSpec("cosine", 0.6, anchor),
        lambda anchor: LossSpec("euclidean", 1.0, anchor),
    ],
)
def test_gradient_matches_finite_differences(spec_factory, rng):
    model = init_model((4, [6], 3), seed=3)  # S = 51
    anchor = model.params + rng.normal(scale=0.3, size=model.size)
    batch = small_batch(rng)
    spec = spec_factory(anchor)
    _, grad = forward_loss_grad(model, batch, spec)
    assert np.max(np.abs(grad - finite_diff(model, batch, spec))) <= 1e-4


def test_gradient_two_hidden_layers(rng):
    model = init_model((3, [5, 4], 3), seed=9)
    assert model.size <= 200
    batch = small_batch(rng, width=3)
    spec = LossSpec("cosine", 0.5, model.params + 0.2)
    _, grad = forward_loss_grad(model, batch, spec)
    assert np.max(np.abs(grad - finite_diff(model, batch, spec))) <= 1e-4


def test_alpha_zero_is_plain_cross_entropy(rng):
    model = init_model((4, [6], 3), seed=3)
    batch = small_batch(rng)
    plain = forward_loss_grad(model, batch, LossSpec())
    mixed = forward_loss_grad(model, batch, LossSpec("euclidean", 0.0, rng.normal(size=model.size)))
    assert plain[0] == mixed[0]
    assert np.array_equal(plain[1], mixed[1])


def test_cosine_term_zero_at_anchor(rng):
    model = init_model((4, [6], 3), seed=3)
    batch = small_batch(rng)
    ce, _ = forward_loss_grad(model, batch, LossSpec())
    full, _ = forward_loss_grad(model, batch, LossSpec("cosine", 0.4, model.params.copy()))
    assert full == pytest.approx(0.6 * ce, abs=1e-12)


def test_width_mismatch_is_shape_error(rng):
    model = init_model((4, [6], 3), seed=3)
    with pytest.raises(ShapeError):
        forward_loss_grad(model, (rng.normal(size=(5, 7)), np.zeros(5, dtype=int)), LossSpec())


def test_local_train_zero_epochs(rng):
    model = init_model((4, [6], 3), seed=3)
    data = LabeledDataset(*small_batch(rng))
    _, upd = local_train(model, data, TrainConfig(local_epochs=0))
    assert np.array_equal(upd.delta, np.zeros(model.size))


def test_local_train_deterministic_and_exact_delta(rng):
    model = init_model((4, [6], 3), seed=3)
    data = LabeledDataset(*small_batch(rng, n=40))
    cfg = TrainConfig(seed=5)
    trained, a = local_train(model, data, cfg)
    _, b = local_train(model, data, cfg)
    assert np.array_equal(a.delta, b.delta)
    assert np.array_equal(trained.params - model.params, a.delta)


def test_local_train_empty_dataset():
    model = init_model((4, [6], 3), seed=3)
    with pytest.raises(ConfigurationError):
        local_train(model, LabeledDataset(np.zeros((0, 4)), np.zeros(0)), TrainConfig())


def test_training_loss_decreases_on_separable_data():
    data = generate_dataset(2, 4, 50, 0.2, seed=4)
    model = init_model((4, [8], 2), seed=2)
    losses = []
    for epoch in range(5):
        losses.append(forward_loss_grad(model, (data.features, data.labels), LossSpec())[0])
        model, _ = local_train(model, data, TrainConfig(learning_rate=0.1, local_epochs=1, seed=epoch))
    losses.append(forward_loss_grad(model, (data.features, data.labels), LossSpec())[0])
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_slice_layers_round_trip(rng):
    model = init_model((8, [16], 10), seed=0)
    delta = rng.normal(size=314)
    parts = slice_layers(delta, model.layer_map)
    assert [len(p) for p in parts] == [128, 16, 160, 10]
    assert np.array_equal(np.concatenate(parts), delta)


def test_slice_layers_partition(rng):
    model = init_model((5, [4, 3], 2), seed=0)
    idx = np.arange(model.size, dtype=float)
    seen = np.concatenate(slice_layers(idx, model.layer_map))
    assert sorted(seen.tolist()) == idx.tolist()


def test_slice_layers_missing_segment():
    model = init_model((8, [16], 10), seed=0)
    with pytest.raises(ShapeError):
        slice_layers(np.zeros(314), model.layer_map[:-1])


def test_whole_model_map():
    (seg,) = whole_model_map(42)
    assert (seg.start, seg.length) == (0, 42)


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)


def test_model_dims_widths():
    assert ModelDims(32, (64, 32), 10).widths == (32, 64, 32, 10)


def test_params_stay_finite_under_large_steps():
    data = generate_dataset(3, 6, 40, 0.3, seed=1)
    model = init_model((6, [10, 8], 3), seed=1)
    for loss in (LossSpec(), LossSpec("euclidean", 0.5, model.params), LossSpec("cosine", 0.5, model.params)):
        trained, _ = local_train(model, data, TrainConfig(learning_rate=5.0, local_epochs=5), loss)
        assert np.all(np.isfinite(trained.params))
