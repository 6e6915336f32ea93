import math

import numpy as np
import pytest

import hsn


def test_graph_generators_and_metrics():
    ba = hsn.sample_graph("barabasi", 30, m=3, seed=1)
    assert ba.shape == (30, 30)
    assert np.array_equal(ba, ba.T)
    assert ba.sum() / 2 == (30 - 3) * 3
    stats = hsn.graph_statistics(ba)
    assert stats["n_components"] >= 1
    assert hsn.roc_auc_edges(ba, ba) == 1.0
    assert hsn.frobenius_diff(ba, ba) == 0.0
    er = hsn.sample_graph("erdos", 3, p=0.0)
    full = np.ones((3, 3)) - np.eye(3)
    assert math.isclose(hsn.frobenius_diff(er, full), math.sqrt(6))


def test_kl_closed_forms():
    q = np.full((4, 4), 0.2)
    assert abs(hsn.kl_graphs(q, 0.2)) < 1e-12
    assert math.isclose(hsn.kl_graphs(np.full((2, 2), 0.5), 0.5), 0.0, abs_tol=1e-15)
    adj = np.ones((3, 3)) - np.eye(3)
    rho = np.full(3, 1 / 3)
    ones = [np.ones(3), np.ones(3)]
    assert abs(hsn.kl_walks(rho, ones, rho, ones, adj)) < 1e-12


def test_language_and_oracle():
    spec = hsn.ground_truth("erdos", 4, p=0.5, vocab=8, length=3, seed=2)
    assert spec.adjacency.shape == (4, 4)
    assert np.allclose(spec.emission.sum(axis=1), 1.0)
    data = hsn.generate_dataset(spec, 50, seed=2)
    assert len(data) == 50
    assert len(data.split("train")) == 45
    for seq in data.sequences[:10]:
        nll = spec.oracle_nll(seq)
        assert 0 < nll < math.inf
    with pytest.raises(ValueError):
        data.split("nope")


def test_config_errors_surface_as_python_exceptions(tmp_path):
    spec = hsn.ground_truth("erdos", 4, p=0.5, vocab=8, length=3)
    data = hsn.generate_dataset(spec, 20)
    with pytest.raises(hsn.ConfigError):
        hsn.train(data, {"bogus_key": 1}, run_dir=tmp_path)
    with pytest.raises(ValueError):
        hsn.ground_truth("lattice", 4)
    assert "learning_rate" in hsn.default_config()


def test_train_and_evaluate_tiny(tmp_path):
    spec = hsn.ground_truth("erdos", 4, p=0.5, vocab=8, length=3, seed=3)
    data = hsn.generate_dataset(spec, 200, seed=3)
    cfg = {"epochs": 2, "batch_size": 32, "embed_dim": 8, "hidden_dim": 16, "n_blocks": 1,
           "scorer_hidden": 8, "learning_rate": 3e-3, "seed": 3}
    model, rows = hsn.train(data, cfg, run_dir=tmp_path)
    assert [r["epoch"] for r in rows] == [1, 2]
    assert all(math.isfinite(r["rec_nll"]) for r in rows)
    assert (tmp_path / "metrics.csv").read_text().startswith("epoch,rec_nll,kl_walk,kl_graph,mi,beta,auc,frobenius,edges")

    probs = model.edge_probabilities
    assert probs.shape == (4, 4)
    assert np.allclose(probs, probs.T)
    ppl, nll = model.perplexity(data.split("test"), walks=5, graphs=2, seed=1)
    assert ppl > 1 and nll > 0
    assert model.mutual_information(data.split("test")) > -1e-6

    reloaded = hsn.load_model(tmp_path / "checkpoint.bin", spec)
    assert np.array_equal(reloaded.edge_probabilities, probs)
    assert reloaded.perplexity(data.split("test"), walks=5, graphs=2, seed=1) == (ppl, nll)
