import math

import numpy as np
import pytest
from scipy import stats

from hdcos import linalg
from hdcos.data import synth_gaussians
from hdcos.fixed_ring import decode
from hdcos.nn import (ACTIVATIONS, STRUCTURES, LayerSpec, ModelSpec, ParamStore, TrainCfg, evaluate, forward_plain,
                      init_model, load_model, load_model_share, param_layout, predict, save_model, share_model,
                      sweep, train)
from hdcos.nn.io import MODEL_MAGIC
from hdcos.nn.model import SpecError, build_layers, loss_and_grads
from hdcos.nn.train import best_per_row, read_metrics_csv, render_sweep, write_metrics_csv, write_sweep_csv
from hdcos.sharing import HEADER_SIZE, FormatError, reconstruct

from .gradcheck import max_relative_error


def small_problem(structure, activation, seed=0):
    spec = ModelSpec(6, (LayerSpec(structure, 5, activation), LayerSpec(structure, 4, activation)), 3)
    params = init_model(spec, seed)
    rng = np.random.default_rng(seed + 100)
    for k in params:
        if k.endswith(".b"):  # keep pre-activations off the relu kink at exactly 0
            params[k] = params[k] + rng.normal(scale=0.1, size=params[k].shape)
    X = rng.normal(scale=0.7, size=(4, 6))
    y = rng.integers(0, 3, 4)
    return spec, params, X, y


class TestSpec:
    def test_parse(self):
        assert LayerSpec.parse("hd:64:cosine") == LayerSpec("hd", 64, "cosine")
        with pytest.raises(SpecError):
            LayerSpec.parse("hd:64")
        with pytest.raises(SpecError):
            LayerSpec("fft", 4, "cosine")

    def test_json_roundtrip(self):
        spec = ModelSpec.mlp(784, [64, 64], 10, "hd", "cosine", seed=3)
        assert ModelSpec.from_json(spec.to_json()) == spec

    def test_dims_include_head(self):
        assert ModelSpec.mlp(784, [64, 32], 10).dims() == [(784, 64), (64, 32), (32, 10)]

    def test_hd_parameter_count(self):
        spec = ModelSpec.mlp(784, [64, 64], 10, "hd")
        shapes = dict(param_layout(spec))
        assert shapes["0.diag"] == (1024,) and shapes["1.diag"] == (64,)
        assert shapes["2.W"] == (10, 64)


class TestGradients:
    @pytest.mark.parametrize("structure", STRUCTURES)
    @pytest.mark.parametrize("activation", ACTIVATIONS)
    def test_finite_differences(self, structure, activation):
        assert max_relative_error(*small_problem(structure, activation)) < 1e-5

    def test_hd_gradient_equals_projected_dense_gradient(self, rng):
        hd = ModelSpec(8, (LayerSpec("hd", 8, "cosine"),), 3)
        dense = ModelSpec(8, (LayerSpec("dense", 8, "cosine"),), 3)
        p = init_model(hd, 0)
        H = linalg.hadamard_naive(8)
        pd = ParamStore(p.copy())
        del pd["0.diag"]
        pd = ParamStore([("0.W", H * p["0.diag"]), *pd.items()])
        X, y = rng.normal(size=(5, 8)), rng.integers(0, 3, 5)
        np.testing.assert_allclose(forward_plain(hd, p, X), forward_plain(dense, pd, X), atol=1e-12)
        _, g_hd = loss_and_grads(hd, p, X, y)
        _, g_d = loss_and_grads(dense, pd, X, y)
        # dW_ij = g_ij; dL/ddiag_j = sum_i g_ij H_ij
        np.testing.assert_allclose(g_hd["0.diag"], (g_d["0.W"] * H).sum(0), atol=1e-12)
        np.testing.assert_allclose(g_hd["1.W"], g_d["1.W"], atol=1e-12)

    @pytest.mark.parametrize("structure", STRUCTURES)
    def test_dense_matrix_oracle(self, structure, rng):
        spec, params, X, _ = small_problem(structure, "none")
        lin = build_layers(spec)[0]
        W = lin.dense_matrix(params)
        z, _ = lin.forward(params, X)
        np.testing.assert_allclose(z, X @ W.T + params["0.b"], atol=1e-12)


class TestInit:
    def test_deterministic(self):
        spec = ModelSpec.mlp(20, [16], 4, "hd")
        a, b, c = init_model(spec, 1), init_model(spec, 1), init_model(spec, 2)
        np.testing.assert_array_equal(a.flatten(), b.flatten())
        assert not np.array_equal(a.flatten(), c.flatten())

    def test_cosine_bias_uniform(self):
        spec = ModelSpec(32, (LayerSpec("dense", 4000, "cosine"),), 2)
        b = init_model(spec, 0)["0.b"]
        assert stats.kstest(b, stats.uniform(0, 2 * np.pi).cdf).pvalue > 0.01

    @pytest.mark.parametrize("structure", ["dense", "hd", "lowrank", "circulant"])
    def test_cosine_effective_weight_variance(self, structure):
        spec = ModelSpec(64, (LayerSpec(structure, 64, "cosine"),), 2)
        W = np.concatenate([build_layers(spec)[0].dense_matrix(init_model(spec, s)).ravel() for s in range(40)])
        assert W.var() == pytest.approx(1 / 64, rel=0.15)

    def test_zero_weights_give_log_classes(self, rng):
        spec = ModelSpec.mlp(10, [8], 7, "dense", "relu")
        p = init_model(spec, 0)
        for k in p:
            p[k][...] = 0.0
        X, y = rng.normal(size=(3, 10)), rng.integers(0, 7, 3)
        loss, _ = loss_and_grads(spec, p, X, y)
        assert loss == pytest.approx(math.log(7), abs=1e-12)


class TestTraining:
    def setup_method(self):
        ds = synth_gaussians(600, 8, 3, 4.0, seed=0)
        self.train_set, self.test_set = ds.take(np.arange(500)), ds.take(np.arange(500, 600))

    def test_learns_separable_blobs(self):
        spec = ModelSpec.mlp(8, [16], 3, "hd", "cosine")
        res = train(spec, TrainCfg("sgd", 0.1, 16, 5), self.train_set, self.test_set)
        assert len(res.history) == 5 and not res.diverged
        assert res.final_accuracy > 0.85
        assert evaluate(spec, res.params, self.test_set)[0] == res.final_accuracy

    def test_adam(self):
        spec = ModelSpec.mlp(8, [16], 3, "dense", "relu")
        res = train(spec, TrainCfg("adam", 0.01, 16, 3), self.train_set, self.test_set)
        assert res.final_accuracy > 0.85

    def test_reproducible(self):
        spec = ModelSpec.mlp(8, [8], 3, "lowrank", "square")
        cfg = TrainCfg("sgd", 0.05, 8, 2, seed=4)
        a = train(spec, cfg, self.train_set).params.flatten()
        b = train(spec, cfg, self.train_set).params.flatten()
        np.testing.assert_array_equal(a, b)

    def test_divergence_flagged_not_raised(self):
        spec = ModelSpec.mlp(8, [16, 16], 3, "dense", "square")
        res = train(spec, TrainCfg("sgd", 50.0, 8, 4), self.train_set, self.test_set)
        assert res.diverged and len(res.history) == 4
        assert all(r["diverged"] for r in res.history[-2:])

    def test_bad_cfg(self):
        with pytest.raises(ValueError):
            TrainCfg("rmsprop")
        with pytest.raises(ValueError):
            TrainCfg(learning_rate=0)

    def test_metrics_csv_roundtrip(self, tmp_path):
        spec = ModelSpec.mlp(8, [4], 3, "dense", "cosine")
        res = train(spec, TrainCfg(epochs=2), self.train_set)
        write_metrics_csv(tmp_path / "m.csv", res.history, "r1")
        back = read_metrics_csv(tmp_path / "m.csv")
        assert [r["epoch"] for r in back] == [1, 2] and back[0]["run_id"] == "r1"
        assert back[-1]["accuracy"] == pytest.approx(res.final_accuracy, abs=1e-6)

    def test_predict_batches(self, rng):
        spec = ModelSpec.mlp(8, [4], 3)
        p = init_model(spec, 0)
        X = rng.normal(size=(50, 8))
        np.testing.assert_array_equal(predict(spec, p, X, batch_size=7), forward_plain(spec, p, X).argmax(1))


class TestSweep:
    def test_bookkeeping(self, tmp_path):
        ds = synth_gaussians(200, 4, 2, 4.0)
        spec = ModelSpec.mlp(4, [4], 2, "dense", "cosine")
        cells = sweep(spec, ds, ds, activations=("cosine", "square"), learning_rates=(0.01, 0.1),
                      trials=2, epochs=1)
        assert len(cells) == 4 and all(c.trials == 2 for c in cells)
        assert [(c.activation, c.learning_rate) for c in cells] == \
               [("cosine", 0.01), ("cosine", 0.1), ("square", 0.01), ("square", 0.1)]
        assert all(c.std == pytest.approx(np.std(c.accuracies)) for c in cells)
        assert {c.activation for c in best_per_row(cells)} == {"cosine", "square"}
        write_sweep_csv(tmp_path / "s.csv", cells)
        assert len((tmp_path / "s.csv").read_text().splitlines()) == 5
        assert "cosine" in render_sweep(cells)

    def test_parallel_matches_serial(self):
        ds = synth_gaussians(100, 4, 2, 4.0)
        spec = ModelSpec.mlp(4, [4], 2, "dense", "cosine")
        kw = dict(learning_rates=(0.01, 0.1), trials=2, epochs=1)
        a = [c.accuracies for c in sweep(spec, ds, ds, **kw)]
        b = [c.accuracies for c in sweep(spec, ds, ds, workers=2, **kw)]
        assert a == b

    def test_divergent_cell_survives(self):
        ds = synth_gaussians(100, 4, 2, 4.0)
        spec = ModelSpec.mlp(4, [8, 8], 2, "dense", "square")
        (cell,) = sweep(spec, ds, ds, activations=("square",), learning_rates=(100.0,), epochs=2)
        assert cell.diverged == 1 and not cell.errors


class TestModelIO:
    def test_roundtrip_and_size(self, tmp_path):
        spec = ModelSpec.mlp(12, [8], 3, "phd", "cosine")
        p = init_model(spec, 0)
        n = save_model(spec, p, tmp_path / "m.hdmd")
        assert n == (tmp_path / "m.hdmd").stat().st_size
        spec2, p2, f = load_model(tmp_path / "m.hdmd")
        assert spec2 == spec and f == 20 and list(p2) == list(p)
        np.testing.assert_array_equal(p2.flatten(), p.flatten())

    def test_rejects_mismatched_params(self, tmp_path):
        spec = ModelSpec.mlp(4, [4], 2)
        with pytest.raises(ValueError):
            save_model(spec, init_model(ModelSpec.mlp(4, [5], 2)), tmp_path / "m.hdmd")

    @pytest.mark.parametrize("corrupt", [lambda r: b"XXXX" + r[4:], lambda r: r[:-8], lambda r: r[:6]])
    def test_corrupt(self, tmp_path, corrupt):
        path = tmp_path / "m.hdmd"
        spec = ModelSpec.mlp(4, [4], 2)
        save_model(spec, init_model(spec), path)
        assert path.read_bytes()[:4] == MODEL_MAGIC
        path.write_bytes(corrupt(path.read_bytes()))
        with pytest.raises(FormatError):
            load_model(path)

    def test_share_roundtrip(self, tmp_path):
        spec = ModelSpec.mlp(8, [8], 3, "hd", "cosine")
        p = init_model(spec, 0)
        paths = share_model(spec, p, tmp_path, rng=5)
        assert paths["p0"].stat().st_size == HEADER_SIZE + 8 * p.flatten().size
        spec0, sh0, flat0 = load_model_share(paths["p0"], paths["public"])
        spec1, sh1, flat1 = load_model_share(paths["p1"], paths["public"])
        assert spec0 == spec1 == spec and list(sh0) == list(p)
        np.testing.assert_allclose(decode(reconstruct(flat0, flat1)), p.flatten(), atol=2.0**-21)
        np.testing.assert_allclose(decode(reconstruct(sh0["0.diag"], sh1["0.diag"])), p["0.diag"], atol=2.0**-21)
