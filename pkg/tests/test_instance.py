import json

import numpy as np
import pytest

from homecare.instance import (DEFAULT_DOCUMENT, InstanceError, build_geometry,
                               continuation_probabilities, default_instance, instance_to_document,
                               load_instance, pmf_from_continuation, visit_count_pmf)


def test_default_document_loads():
    inst = default_instance()
    assert inst.K == 1 and inst.L == 24
    assert inst.daily_demand == pytest.approx(8.5)
    assert inst.horizon == 5


@pytest.mark.parametrize("geo", [dict(shape="circular", rings=2, diameter=1.0),
                                 dict(shape="rectangular", rows=2, cols=3, diameter=0.5)])
def test_geometry_is_a_manhattan_metric(geo):
    g = build_geometry(**geo)
    d = g.dist
    assert np.allclose(d, d.T) and np.all(np.diag(d) == 0)
    # triangle inequality
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-12)
    assert g.depot_dist.max() <= geo["diameter"] / 2 + 1e-12 or geo["shape"] == "rectangular"


def test_circular_regions_are_ordered_by_ring():
    g = build_geometry("circular", rings=3, diameter=1.2)
    assert g.n_regions == 24
    assert np.all(np.diff(g.depot_dist) >= -1e-12)


@pytest.mark.parametrize("kind,mean,jmax", [("poisson", 8, None), ("poisson", 4, 8),
                                            ("uniform", 3, None), ("deterministic", 5, None)])
def test_visit_distributions(kind, mean, jmax):
    pmf = visit_count_pmf(kind, mean, jmax)
    assert pmf.sum() == pytest.approx(1.0) and np.all(pmf >= 0)
    p = continuation_probabilities(pmf)
    assert np.allclose(pmf_from_continuation(p), pmf)
    if kind != "poisson":
        assert np.dot(np.arange(1, len(pmf) + 1), pmf) == pytest.approx(mean)


def test_valid_mask_structural_zeros():
    doc = json.loads(json.dumps(DEFAULT_DOCUMENT))
    doc["services"] = [{"h": 2, "e": 0.5, "T": 3, "dist": {"kind": "poisson", "mean": 3}}]
    inst = load_instance(doc)
    vm = inst.valid_mask()
    assert vm.shape == (3, 1, 24, inst.jmax)
    assert vm[0, 0, 0, 0] and vm[1, 0, 0, 0] and not vm[2, 0, 0, 0]   # first visits by day T-1
    assert vm[0, 0, 0, 1] and vm[1, 0, 0, 1] and not vm[2, 0, 0, 1]   # follow-ups within h days


def test_document_round_trip():
    inst = default_instance()
    again = load_instance(instance_to_document(inst))
    assert np.allclose(again.dist, inst.dist)
    assert np.allclose(again.lam, inst.lam)
    assert again.weights == inst.weights


@pytest.mark.parametrize("mutate,needle", [
    (lambda d: d.pop("gamma"), "gamma"),
    (lambda d: d.update(gamma=1.5), "gamma"),
    (lambda d: d["geometry"].update(shape="hexagon"), "geometry.shape"),
    (lambda d: d["services"][0].update(h=0), "services[0].h"),
    (lambda d: d.update(arrivals={"mode": "explicit", "matrix": [[1, 2]]}), "arrivals.matrix"),
    (lambda d: d["geometry"].update(diameter_h=40.0), "reachability"),
])
def test_invalid_documents_name_the_problem(mutate, needle):
    doc = json.loads(json.dumps(DEFAULT_DOCUMENT))
    mutate(doc)
    with pytest.raises(InstanceError) as exc:
        load_instance(doc)
    assert any(needle in e for e in exc.value.errors) or needle in str(exc.value)


def test_malformed_json_text():
    with pytest.raises(InstanceError, match="malformed JSON"):
        load_instance("{not json")
