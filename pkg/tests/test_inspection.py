import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otatti.errors import ConfigurationError, InspectionUnavailableError, ShapeError
from otatti.inspection import (
    ClusterStats,
    ahc_two,
    cluster_stats,
    extract_features,
    inspect_suspects,
    layer_feature_matrix,
    select_benign,
    standardize_columns,
    trusted_reference,
    verdict,
)
from otatti.model import init_model


def stats(members, d=0.0, sd=0.0, dev=0.0, rs=0.0):
    return ClusterStats(frozenset(members), d, sd, dev, rs)


@pytest.fixture
def layer_map():
    return init_model((4, [5], 3), seed=0).layer_map  # lengths 20, 5, 15, 3


def test_reference_examples(rng, layer_map):
    v = rng.normal(size=43)
    assert all(np.array_equal(a, b) for a, b in zip(trusted_reference([v], layer_map), np.split(v, [20, 25, 40])))
    assert all(np.all(s == 0) for s in trusted_reference([v, -v], layer_map))
    three = rng.normal(size=(3, 43))
    ref = np.concatenate(trusted_reference(list(three), layer_map))
    oracle = (three[0] + three[1] + three[2]) / 3
    assert np.max(np.abs(ref - oracle)) <= 1e-12
    with pytest.raises(InspectionUnavailableError):
        trusted_reference([], layer_map)


def test_feature_examples(rng):
    ref = rng.normal(size=12)
    f = extract_features(ref, ref)
    assert f.l1_dev == 0.0 and f.angle_sim == pytest.approx(1.0) and f.d_mean == 0.0
    g = extract_features(np.array([1.0, -1.0, 1.0, -1.0]), np.zeros(4))
    assert g.skewness == pytest.approx(0.0, abs=1e-15) and g.kurtosis == pytest.approx(-2.0)
    pos = extract_features(np.abs(ref) + 0.1, ref)
    assert pos.neg_count == 0 and pos.zero_count == 0 and pos.pos_count == 12


def test_feature_counts_sum_and_d_mean(rng):
    g = np.array([0.0, 1e-13, -2.0, 3.0, 0.5])
    peers = [rng.normal(size=5), rng.normal(size=5)]
    f = extract_features(g, np.zeros(5), peers)
    assert f.pos_count + f.neg_count + f.zero_count == 5
    assert f.zero_count == 2
    assert f.d_mean == pytest.approx(np.mean([np.linalg.norm(g - p) for p in peers]))
    with pytest.raises(ShapeError):
        extract_features(g, np.zeros(4))


def test_feature_matrix_matches_single_extraction(rng):
    block = rng.normal(size=(4, 9))
    ref = rng.normal(size=9)
    mat = layer_feature_matrix(block, ref)
    for i in range(4):
        peers = [block[j] for j in range(4) if j != i]
        np.testing.assert_allclose(mat[i], extract_features(block[i], ref, peers).as_array(), atol=1e-12)


def test_standardize_constant_column():
    x = np.array([[1.0, 5.0], [3.0, 5.0]])
    np.testing.assert_array_equal(standardize_columns(x), [[-1.0, 0.0], [1.0, 0.0]])


def test_ahc_examples():
    assert list(ahc_two(np.array([[0.0, 0.0], [1.0, 1.0]]))) == [0, 1]
    assert list(ahc_two(np.array([[0, 0], [0.1, 0], [10, 10], [10.1, 10]], dtype=float))) == [0, 0, 1, 1]
    with pytest.raises(ConfigurationError):
        ahc_two(np.zeros((1, 3)))


@given(st.integers(0, 2**31 - 1), st.integers(0, 8), st.floats(1e-3, 1e3))
def test_ahc_column_rescale_invariant(seed, col, factor):
    x = np.random.default_rng(seed).normal(size=(7, 9))
    y = x.copy()
    y[:, col] *= factor
    assert list(ahc_two(x)) == list(ahc_two(y))


def test_cluster_stats_examples(rng):
    ref = rng.normal(size=6)
    a = rng.normal(size=6)
    s = cluster_stats([3], {3: a}, ref, {3: 4})
    assert (s.d_mean, s.sd_mean, s.rs_sum) == (0.0, 0.0, 4.0)
    twin = cluster_stats([1, 2], {1: a, 2: a.copy()}, ref, {1: 1, 2: 2})
    assert twin.d_mean == 0.0 and twin.sd_mean == 0.0
    assert twin.dev_mean == pytest.approx(np.abs(a - ref).mean())
    assert cluster_stats([0, 1], {0: ref, 1: ref.copy()}, ref, {}).dev_mean == 0.0
    with pytest.raises(ConfigurationError):
        cluster_stats([], {}, ref, {})


def test_cluster_stats_oracle():
    a, b, c = np.array([0.0, 0.0]), np.array([3.0, 4.0]), np.array([0.0, 4.0])
    s = cluster_stats([0, 1, 2], {0: a, 1: b, 2: c}, np.zeros(2), {0: 1, 1: 2, 2: 3})
    assert s.d_mean == pytest.approx((5 + 4 + 3) / 3)
    assert s.sd_mean == pytest.approx((np.std([0, 3, 0]) + np.std([0, 4, 4])) / 2)
    assert s.dev_mean == pytest.approx((0 + 3.5 + 2) / 3)
    assert s.rs_sum == 6.0


def test_select_benign_examples():
    assert select_benign(stats({0}, dev=0.1, rs=5), stats({1}, dev=0.9, rs=5)) == 0
    assert select_benign(stats({4}, d=2.0, dev=0.1, rs=1), stats({0}, d=1.0, dev=0.9, rs=50)) == 0
    assert select_benign(stats({2, 5}), stats({0, 7})) == 1
    assert select_benign(stats({1}, dev=0.3, rs=2), stats({0}, dev=0.3, rs=9)) == 1


def test_select_benign_symmetric():
    a, b = stats({0, 3}, d=1.0, dev=0.5, rs=3), stats({1}, d=0.2, dev=0.2, rs=10)
    assert select_benign(a, b) == 1 - select_benign(b, a)


def test_verdict_examples():
    v = verdict(3, [True] * 6 + [False] * 4, 0.6)
    assert v.benign_fraction == 0.6 and v.accepted
    assert verdict(0, [True] * 4, 0.6).accepted
    assert not verdict(0, [False] * 4, 0.6).accepted
    with pytest.raises(ConfigurationError):
        verdict(0, [], 0.6)
    with pytest.raises(ConfigurationError):
        verdict(0, [True], 1.0)


@given(st.lists(st.booleans(), min_size=1, max_size=20), st.floats(0.01, 0.99))
def test_verdict_monotone(flags, rho):
    before = verdict(0, flags, rho)
    after = verdict(0, flags + [True], rho)
    assert not (before.accepted and not after.accepted)
    assert before.benign_fraction == pytest.approx(np.mean(flags))


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 10.0))
def test_reference_identical_candidate_accepted_pairwise(seed, scale):
    rng = np.random.default_rng(seed)
    layer_map = init_model((4, [5], 3), seed=0).layer_map
    ref = rng.normal(size=43)
    other = ref + rng.normal(scale=scale, size=43)
    out = inspect_suspects({3: ref.copy(), 7: other}, ref, layer_map, {3: 0, 7: 0}, 0.6)
    assert out[3].benign_fraction == 1.0 and out[3].accepted


def test_reference_identical_candidate_accepted_among_outliers(rng, layer_map):
    ref = rng.normal(size=43)
    suspects = {2: ref.copy()}
    suspects.update({k: ref + 4.0 + rng.normal(scale=0.1, size=43) for k in (5, 8, 9)})
    out = inspect_suspects(suspects, ref, layer_map, {k: 0 for k in range(10)}, 0.6)
    assert out[2].benign_fraction == 1.0 and out[2].accepted


def test_reference_identical_candidate_accepted(rng, layer_map):
    ref = rng.normal(size=43)
    suspects = {2: ref.copy(), 5: ref + rng.normal(size=43), 8: ref - 3 * rng.normal(size=43), 9: rng.normal(size=43)}
    out = inspect_suspects(suspects, ref, layer_map, {k: 0 for k in range(10)}, 0.6)
    assert out[2].benign_fraction == 1.0 and out[2].accepted


def test_standardize_ignores_rounding_spread():
    x = np.array([[-1.5, 1.0], [-1.5 + 4e-16, 2.0], [-1.5, 3.0]])
    assert np.all(standardize_columns(x)[:, 0] == 0.0)


def test_inspection_deterministic(rng, layer_map):
    ref = rng.normal(size=43)
    suspects = {k: ref + rng.normal(scale=k + 1, size=43) for k in range(5)}
    rs = {k: k for k in range(5)}
    assert inspect_suspects(suspects, ref, layer_map, rs, 0.6) == inspect_suspects(suspects, ref, layer_map, rs, 0.6)


def test_outlier_suspect_rejected(rng, layer_map):
    ref = rng.normal(size=43)
    suspects = {k: ref + rng.normal(scale=0.01, size=43) for k in range(4)}
    suspects[4] = ref + rng.normal(scale=5.0, size=43)
    out = inspect_suspects(suspects, ref, layer_map, {k: 3 for k in range(5)}, 0.6)
    assert not out[4].accepted
    assert all(out[k].accepted for k in range(4))


def test_single_suspect_uses_trusted_reports(rng, layer_map):
    ref = rng.normal(size=43)
    close = {7: ref + 0.001}
    reports = [[1.0, 1.0, 1.0, 1.0]] * 3
    assert inspect_suspects(close, ref, layer_map, {}, 0.6, reports)[7].accepted
    far = {7: ref + 10.0}
    assert not inspect_suspects(far, ref, layer_map, {}, 0.6, reports)[7].accepted
    with pytest.raises(InspectionUnavailableError):
        inspect_suspects(close, ref, layer_map, {}, 0.6)
    assert inspect_suspects({}, ref, layer_map, {}, 0.6) == {}
