import json
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binomtest
from hypothesis import given, settings
from hypothesis import strategies as st

from leverbench.sampling import (
    Dataset,
    Sample,
    export_corpus,
    format_value,
    parse_sample,
    render_sample,
    sample_dataset,
)
from leverbench.world import enumerate_visible_inputs, true_conditional, world_1, world_3

GOLDEN = Path(__file__).parent / "golden"


class TestSampleDataset:
    def test_empty(self, w1):
        d = sample_dataset(w1, 0, 0)
        assert len(d) == 0
        assert d.X.shape == (0, w1.n_columns)

    def test_negative_rejected(self, w1):
        with pytest.raises(ValueError):
            sample_dataset(w1, -1, 0)

    def test_deterministic_bytes(self, w3):
        a = sample_dataset(w3, 500, 42).to_json()
        b = sample_dataset(w3, 500, 42).to_json()
        assert a == b

    def test_different_seeds_differ(self, w1):
        assert sample_dataset(w1, 200, 1).to_json() != sample_dataset(w1, 200, 2).to_json()

    def test_worker_count_invariant(self, w1, monkeypatch):
        import leverbench.sampling as sampling

        monkeypatch.setattr(sampling, "CHUNK_SIZE", 100)
        serial = sample_dataset(w1, 1050, 3, n_jobs=1)
        parallel = sample_dataset(w1, 1050, 3, n_jobs=4)
        assert np.array_equal(serial.X, parallel.X)
        assert np.array_equal(serial.y, parallel.y)

    def test_inputs_on_manifold(self, w3):
        d = sample_dataset(w3, 2000, 0)
        w3.check_inputs(d.X)

    def test_latent_never_stored(self, w1):
        d = sample_dataset(w1, 10, 0)
        assert "distance" not in " ".join(
            name for name in d.to_dict()["columns"] if name.startswith("object2")
        )
        assert d.X.shape[1] == w1.n_columns

    def test_frequencies_match_truth(self, w1):
        n = 10**5
        d = sample_dataset(w1, n, 11)
        keys, inverse = np.unique(d.X, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        n_x = np.bincount(inverse)
        n_left = np.bincount(inverse, weights=d.y)
        p = true_conditional(w1, keys)
        ok = n_x >= 100
        assert ok.sum() > 400
        freq = n_left / n_x
        # 4-sigma band where the normal approximation holds
        clt = ok & (n_x * p * (1 - p) >= 5)
        assert clt.sum() > 100
        tol = 4 * np.sqrt(p[clt] * (1 - p[clt]) / n_x[clt])
        assert np.all(np.abs(freq[clt] - p[clt]) <= tol)
        # rare-event inputs: exact two-sided binomial test instead
        for k, n_i, p_i in zip(n_left[ok & ~clt], n_x[ok & ~clt], p[ok & ~clt]):
            if p_i in (0.0, 1.0):
                assert k == n_i * p_i
            else:
                assert binomtest(int(k), int(n_i), p_i).pvalue > 1e-6

    def test_json_round_trip(self, w3, tmp_path):
        d = sample_dataset(w3, 50, 5)
        d.save(tmp_path / "d.json")
        back = Dataset.load(tmp_path / "d.json")
        assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y)
        assert back.world == w3 and back.seed == 5


class TestRender:
    def test_spec_example(self, w1):
        x = np.zeros(w1.n_columns)
        for (obj, kind), v in {(1, "mass"): 2, (1, "distance"): 3, (1, "side"): 1, (2, "mass"): 4, (2, "side"): -1}.items():
            x[w1.column_index(obj, kind)] = v
        line = render_sample(w1, Sample(tuple(x), "L"))
        assert line == (
            "object1 distance: 3, object1 side: L, object1 mass: 2, "
            "object2 side: R, object2 mass: 4, balance: L"
        )

    def test_world3_field_order(self, w3):
        d = sample_dataset(w3, 1, 0)
        fields = [f.split(":")[0] for f in render_sample(w3, d[0]).split(", ")]
        assert fields == [
            "object1 density", "object1 volume", "object1 distance", "object1 side", "object1 mass",
            "object2 density", "object2 volume", "object2 side", "object2 mass", "balance",
        ]

    def test_format_value(self):
        assert format_value(4.0) == "4"
        assert format_value(2.5) == "2.5"
        assert format_value(0.1) == "0.1"

    @pytest.mark.parametrize("name,world", [("world1", world_1), ("world3", world_3)])
    def test_golden(self, name, world):
        w = world()
        d = sample_dataset(w, 20, 0)
        text = "".join(render_sample(w, s) + "\n" for s in d)
        assert text == (GOLDEN / f"{name}_seed0_n20.txt").read_text(encoding="utf-8")

    @pytest.mark.parametrize("world", [world_1, world_3])
    def test_round_trip_enumerated(self, world):
        w = world()
        X, _ = enumerate_visible_inputs(w)
        for i in range(0, len(X), 7):
            for outcome in ("L", "R"):
                s = Sample(tuple(X[i]), outcome)
                assert parse_sample(w, render_sample(w, s)) == s

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30))
    def test_round_trip_property(self, seed, n):
        w = world_3()
        for s in sample_dataset(w, n, seed):
            assert parse_sample(w, render_sample(w, s)) == s

    def test_parse_rejects_garbage(self, w1):
        with pytest.raises(ValueError):
            parse_sample(w1, "object1 distance: 3, balance: L")
        with pytest.raises(ValueError):
            parse_sample(w1, "no balance here")


class TestExportCorpus:
    def test_writes_lines_and_sidecar(self, w1, tmp_path):
        d = sample_dataset(w1, 25, 9)
        path = export_corpus(d, tmp_path / "corpus.txt")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 25
        assert lines[0] == render_sample(w1, d[0])
        meta = json.loads((tmp_path / "corpus.txt.meta.json").read_text())
        assert meta["seed"] == 9 and meta["n_samples"] == 25
        assert meta["world"] == w1.to_dict()

    def test_io_error_has_path(self, w1, tmp_path):
        d = sample_dataset(w1, 2, 0)
        target = tmp_path / "missing-dir" / "corpus.txt"
        with pytest.raises(OSError, match="missing-dir"):
            export_corpus(d, target)
