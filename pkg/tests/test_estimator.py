import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from routeseq import RouteSeq2Seq
from routeseq.astar import generate_dataset
from routeseq.diffusion import DiffusionSchedule
from routeseq.validation import check_pairs, check_routes


def tiny(**kw):
    base = dict(hidden=8, d_emb=8, epochs=2, seed=1)
    base.update(kw)
    return RouteSeq2Seq(**base)


def test_params_round_trip():
    est = tiny(variant="gru2rnn")
    params = est.get_params()
    assert params["variant"] == "gru2rnn" and params["hidden"] == 8
    est.set_params(learning_rate=0.01)
    assert est.learning_rate == 0.01
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est


def test_fit_predict_transform(toy5):
    ds = generate_dataset(toy5, 12, seed=0)
    est = tiny(graph=toy5).fit(ds)
    assert len(est.loss_curve_) == 2 and est.n_nodes_ == 5
    assert est.max_len_ == round(4 * np.mean([r.hops for r in ds.train]))
    preds = est.predict(ds)
    assert len(preds) == len(ds.test)
    assert all(p is None or (p.src, p.dst) == (t.src, t.dst) for p, t in zip(preds, ds.test))
    ctx = est.transform([[0, 4], [1, 3]])
    assert ctx.shape == (2, 16)
    assert 0.0 <= est.score(ds) <= 1.0


def test_graph_free_usage_returns_greedy_decodes():
    routes = [[0, 1, 2], [2, 3, 4], [4, 3]]
    est = tiny(max_len=4).fit(routes)
    assert est.n_nodes_ == 5
    out = est.predict(np.array([[0, 2], [4, 4]]))
    assert out[1] == [4] and out[0][0] == 0 and len(out[0]) <= 4
    with pytest.raises(ValueError):
        est.score(routes)


def test_fit_is_deterministic(toy5):
    ds = generate_dataset(toy5, 10, seed=2)
    a = tiny(graph=toy5).fit(ds).model_.theta
    b = tiny(graph=toy5).fit(ds).model_.theta
    assert a.tobytes() == b.tobytes()


def test_diffusion_parameter_forms():
    routes = [[0, 1, 2], [2, 3]]
    est = tiny(diffusion="2:1,1:1").fit(routes)
    assert [s for _, s, _ in est.loss_curve_] == [2.0, 1.0]
    est = tiny(diffusion=DiffusionSchedule(((3.0, 1),))).fit(routes)
    assert len(est.loss_curve_) == 1


def test_unfitted_and_bad_input():
    with pytest.raises(NotFittedError):
        tiny().predict([[0, 1]])
    est = tiny(n_nodes=4).fit([[0, 1, 2]])
    with pytest.raises(ValueError):
        est.predict([[0, 9]])
    with pytest.raises(ValueError):
        est.predict([0, 1])
    with pytest.raises(ValueError):
        tiny(n_nodes=3).fit([[0, 1, 5]])


def test_validation_helpers():
    assert check_routes([(0, 1), np.array([2, 3, 1])]) == [[0, 1], [2, 3, 1]]
    with pytest.raises(ValueError, match="at least 2"):
        check_routes([[1]])
    with pytest.raises(ValueError, match="consecutive"):
        check_routes([[1, 1, 2]])
    with pytest.raises(ValueError):
        check_routes([])
    assert check_pairs([[0.0, 2.0]], 3).dtype == np.int64
    with pytest.raises(ValueError, match="integers"):
        check_pairs([[0.5, 2.0]], 3)
    with pytest.raises(ValueError):
        check_pairs(np.zeros((0, 2)), 3)
