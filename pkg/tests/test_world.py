import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gauss_hermite_p_left

from leverbench.world import (
    LatentGaussian,
    ObjectSpec,
    OffManifoldError,
    VariableKind,
    WorldSpec,
    balance_outcome,
    enumerate_visible_inputs,
    generate_world,
    probit_from_components,
    probit_score,
    torque,
    true_conditional,
)


class TestGenerateWorld:
    def test_world1_variables(self):
        w = generate_world(1, 2, False)
        assert set(w.column_names) == {
            "object1 mass", "object1 distance", "object1 side", "object2 mass", "object2 side",
        }
        assert w.latent_object.index == 2

    def test_world3_variables(self):
        w = generate_world(3, 2, True)
        expected = {f"object{i} {k}" for i in (1, 2) for k in ("density", "volume", "mass", "side")}
        expected.add("object1 distance")
        assert set(w.column_names) == expected

    def test_deterministic(self):
        assert generate_world(7, 3, [True, False, True]) == generate_world(7, 3, [True, False, True])

    def test_mu_drawn_in_range(self):
        for seed in range(50):
            assert 1.0 <= generate_world(seed).latent.mean <= 5.0

    def test_mu_override(self):
        assert generate_world(1, mu=2.668).latent.mean == 2.668

    def test_rejects_single_object(self):
        with pytest.raises(ValueError):
            generate_world(0, 1)

    def test_rejects_multiple_latents(self):
        with pytest.raises(ValueError, match="exactly one latent"):
            generate_world(0, 2, latent=[(1, "distance"), (2, "distance")])

    def test_rejects_non_distance_latent(self):
        with pytest.raises(ValueError):
            generate_world(0, 2, latent=[(2, "mass")])

    def test_latent_variance_fixed(self):
        with pytest.raises(ValueError):
            LatentGaussian(2.0, variance=2.0)

    def test_worldspec_rejects_two_latents(self):
        objs = (ObjectSpec(1, latent_distance=True), ObjectSpec(2, latent_distance=True))
        with pytest.raises(ValueError):
            WorldSpec(0, objs, LatentGaussian(2.0))

    def test_json_round_trip(self, w3, tmp_path):
        path = tmp_path / "w.json"
        w3.save(path)
        assert WorldSpec.load(path) == w3


class TestBalance:
    def test_single_positive(self):
        assert balance_outcome([6.0]) == "L"

    def test_tie_is_left(self):
        assert balance_outcome([6.0, -6.0]) == "L"

    def test_torque_sum(self):
        torques = [torque(+1, 2, 1), torque(-1, 1, 3)]
        assert torques == [2, -3]
        assert balance_outcome(torques) == "R"

    def test_empty(self):
        with pytest.raises(ValueError):
            balance_outcome([])


def _two_object_world(mu):
    return generate_world(0, 2, False, mu=mu)


def _input_with(world, K_obj1, c_obj2):
    """World-1 style row with object1 torque K (as s*d*m) and object2 c = s*m."""
    s1, d1, m1 = K_obj1
    s2, m2 = c_obj2
    return np.array([[d1, s1, m1, s2, m2]], dtype=float)


class TestTrueConditional:
    def test_symmetric_gaussian(self):
        # objects 1 and 2 cancel (K = 0); object 3 has c = 1 and mu = 0
        w = generate_world(0, 3, mu=0.0)
        x = np.array([[1, 1, 1, 1, -1, 1, 1, 1]], dtype=float)
        K, c = w.torque_components(x)
        assert (K[0], c[0]) == (0.0, 1.0)
        assert true_conditional(w, x)[0] == 0.5

    def test_large_K_limit(self):
        w = _two_object_world(mu=1.0)
        x = _input_with(w, (1, 5, 5), (1, 1))  # K = 25, c = 1
        assert true_conditional(w, x)[0] == pytest.approx(1.0, abs=1e-12)

    def test_negative_c_monte_carlo(self):
        w = _two_object_world(mu=2.668)
        x = _input_with(w, (1, 1, 2), (-1, 1))  # K = 2, c = -1
        p = true_conditional(w, x)[0]
        rng = np.random.default_rng(12345)
        d = rng.normal(2.668, 1.0, 10**7)
        mc = np.mean(2.0 - d >= 0)
        se = math.sqrt(p * (1 - p) / 10**7)
        assert abs(mc - p) <= 3 * se

    def test_degenerate_c_zero(self):
        z = probit_from_components([1.0, 0.0, -1.0], [0.0, 0.0, 0.0], 2.0)
        assert list(z) == [np.inf, np.inf, -np.inf]

    def test_components_formula_both_signs(self):
        z = probit_from_components([2.0, 2.0], [1.0, -1.0], 2.668)
        # c > 0: K/c + mu; c < 0: -K/c - mu
        np.testing.assert_allclose(z, [2.0 + 2.668, 2.0 - 2.668])

    def test_off_manifold_rejected(self, w3):
        X, _ = enumerate_visible_inputs(w3)
        bad = X[:1].copy()
        bad[0, w3.column_index(1, "mass")] += 1
        with pytest.raises(OffManifoldError):
            true_conditional(w3, bad)

    def test_off_grid_rejected(self, w1):
        X, _ = enumerate_visible_inputs(w1)
        bad = X[:1].copy()
        bad[0, w1.column_index(1, "distance")] = 2.5
        with pytest.raises(OffManifoldError):
            true_conditional(w1, bad)

    def test_bad_side_rejected(self, w1):
        X, _ = enumerate_visible_inputs(w1)
        bad = X[:1].copy()
        bad[0, w1.column_index(1, "side")] = 0
        with pytest.raises(OffManifoldError):
            true_conditional(w1, bad)

    @pytest.mark.parametrize("world_name", ["w1", "w3"])
    def test_range(self, world_name, request):
        w = request.getfixturevalue(world_name)
        X, _ = enumerate_visible_inputs(w)
        p = true_conditional(w, X)
        assert np.all((p >= 0) & (p <= 1))

    @pytest.mark.parametrize("world_name", ["w1", "w3"])
    def test_agrees_with_gauss_hermite(self, world_name, request):
        w = request.getfixturevalue(world_name)
        X = w.sample_inputs(np.random.default_rng(5), 100)
        K, c = w.torque_components(X)
        p = true_conditional(w, X)
        gh = np.array([gauss_hermite_p_left(k, cc, w.latent.mean) for k, cc in zip(K, c)])
        np.testing.assert_allclose(p, gh, atol=1e-8, rtol=0)

    def test_side_flip_complements(self, w1):
        X, _ = enumerate_visible_inputs(w1)
        flipped = X.copy()
        for o in w1.objects:
            j = w1.column_index(o.index, "side")
            flipped[:, j] = -flipped[:, j]
        # the boundary sum T = 0 has probability zero under the Gaussian latent
        np.testing.assert_allclose(true_conditional(w1, flipped), 1 - true_conditional(w1, X), atol=1e-12)


class TestMonotonicity:
    """Raising a scalar on an object's side pushes p(L) towards that side.

    Exception: the latent-distance object. Its distance can be negative, so
    when the visible torque already points to that object's side (K * s > 0),
    more mass makes the opposite outcome more likely and the sign reverses.
    """

    @pytest.mark.parametrize("world_name", ["w1", "w3"])
    def test_every_free_column(self, world_name, request):
        w = request.getfixturevalue(world_name)
        X, _ = enumerate_visible_inputs(w)
        K, _ = w.torque_components(X)
        grid = np.asarray(w.grid, dtype=float)
        for j in w.free_columns():
            col = w.columns[j]
            side = X[:, w.column_index(col.object_index, VariableKind.SIDE)]
            up = X[X[:, j] < grid.max()].copy()
            base = up.copy()
            up[:, j] = grid[np.searchsorted(grid, up[:, j]) + 1]
            w.complete(up)
            sel = X[:, j] < grid.max()
            dz = probit_score(w, up) - probit_score(w, base)
            expected = side[sel].copy()
            if col.object_index == w.latent_object.index:
                expected = np.where(K[sel] * side[sel] > 0, -expected, expected)
            assert np.array_equal(np.sign(dz), expected), col.name
            dp = true_conditional(w, up) - true_conditional(w, base)
            assert np.all(dp * expected >= 0)


class TestEnumerate:
    def test_world1_count(self, w1):
        X, wts = enumerate_visible_inputs(w1)
        assert len(X) == 5**3 * 2**2 == 500
        np.testing.assert_allclose(wts, 1 / 500)

    def test_world3_count(self, w3):
        X, wts = enumerate_visible_inputs(w3)
        assert len(X) == 5**5 * 2**2 == 12500
        assert math.isclose(wts.sum(), 1.0)

    def test_fixed_sides_world(self, w125):
        X, _ = enumerate_visible_inputs(w125)
        assert len(X) == 125 == w125.n_inputs
        assert len(np.unique(X, axis=0)) == 125

    def test_all_distinct_and_on_manifold(self, w3):
        X, _ = enumerate_visible_inputs(w3)
        assert len(np.unique(X, axis=0)) == len(X)
        w3.check_inputs(X)

    @settings(max_examples=25, deadline=None)
    @given(
        n_objects=st.integers(2, 3),
        dv=st.lists(st.booleans(), min_size=3, max_size=3),
        seed=st.integers(0, 10_000),
    )
    def test_weights_normalized(self, n_objects, dv, seed):
        w = generate_world(seed, n_objects, dv[:n_objects])
        X, wts = enumerate_visible_inputs(w)
        assert len(X) == w.n_inputs
        assert math.isclose(wts.sum(), 1.0)
