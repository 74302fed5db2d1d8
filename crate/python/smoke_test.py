"""Smoke test for the `said` extension module.

Build and run from the repository root:

    cargo build -p said-py --release --features extension-module
    cp target/release/libsaid.so python/said.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import said  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def check_weights():
    for alpha in (0.0, 0.4, 1.0):
        assert said.weight_of(0.3, alpha, 5.0, 0.3) == (1 + alpha) / 2
    assert said.weight_of(0.9, 1.0, 5.0, 0.1) == 1.0
    lo, hi = said.weight_of(-0.5, 0.4, 5.0, 0.0), said.weight_of(0.5, 0.4, 5.0, 0.0)
    expected = 0.4 + 0.6 / (1 + math.exp(-2.5))
    assert 0.4 < lo < hi < 1.0 and abs(hi - expected) < 1e-12
    try:
        said.weight_of(0.0, 1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("alpha above 1 accepted")


def check_metrics():
    assert said.auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert said.auc([0.5, 0.5], [1, 0]) == 0.5
    assert abs(said.logloss([0.5, 0.5], [1, 0]) - math.log(2)) < 1e-12
    agg = said.aggregate([(0.8, 0.5), (0.9, 0.4)])
    assert abs(agg["auc"]["mean"] - 0.85) < 1e-12


def check_embeddings():
    v = said.encode_fallback("Toy Story (1995)", 64)
    assert len(v) == 64 and abs(sum(x * x for x in v) - 1) < 1e-9
    assert abs(said.cosine(v, v) - 1) < 1e-12
    table = said.EmbeddingTable(4)
    table.insert("item", 1, [1.0, 0.0, 0.0, 0.0])
    table.insert("profile", 9, [0.0, 1.0, 0.0, 0.0])
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "t.saidemb")
        table.save(path)
        back = said.EmbeddingTable.load(path)
    assert len(back) == 2 and back.dim == 4
    assert back.get("item", 1) == [1.0, 0.0, 0.0, 0.0]
    assert back.get("item", 2) is None


def check_model():
    g = said.gradcheck(points=5)
    assert g["max_rel_error"] < 1e-4, g
    users = [u for u in range(20) for _ in range(4)]
    items = [(u + k) % 10 for u in range(20) for k in range(4)]
    labels = [int(i < 5) for i in items]
    model = said.CtrModel(20, 10, embedding_dim=4, hidden=[8], seed=1)
    before = model.loss(users, items, labels)
    trace = model.fit(users, items, labels, (users, items, labels),
                      learning_rate=0.01, batch_size=16, max_epochs=20, patience=20)
    assert len(trace) == 20
    assert model.loss(users, items, labels) < before
    assert said.auc(model.predict(users, items), labels) > 0.9


def check_experiment():
    with tempfile.TemporaryDirectory() as d:
        rows = said.run_experiment(
            os.path.join(ROOT, "configs", "synthetic.toml"),
            [
                "synthetic.users=60", "synthetic.items=30", "synthetic.positives_per_user=6",
                "grid.noise=[0.2]", "grid.alpha=[0.4, 1.0]", "grid.seeds=[0]",
                "train.max_epochs=2", "train.hidden=[8]", "train.embedding_dim=4",
                'output.dir="%s"' % d,
            ],
        )
        assert [(r["noise"], r["alpha"]) for r in rows] == [(0.2, 0.4), (0.2, 1.0)], rows
        assert all(r["seeds_ok"] == 1 and 0 <= r["auc"]["mean"] <= 1 for r in rows)
        assert os.path.exists(os.path.join(d, "report.json"))


if __name__ == "__main__":
    for check in (check_weights, check_metrics, check_embeddings, check_model, check_experiment):
        check()
        print("ok", check.__name__)
    print("said", said.__version__, "smoke test passed")
