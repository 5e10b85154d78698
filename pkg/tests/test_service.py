import json
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from skillproto.data import encode_query
from skillproto.service import create_app
from skillproto.training import TrainConfig, fit
from test_training import TINY, tiny_dataset


@pytest.fixture(scope="module")
def served():
    vocab, samples, graph, pool = tiny_dataset(n=80, seed=17)
    cfg = TrainConfig(seed=3, **TINY)
    model, _ = fit(vocab, samples[:60], samples[60:], cfg, graph=graph, pool=pool)
    return model, TestClient(create_app(model))


class TestEndpoints:
    def test_health(self, served):
        _, client = served
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}

    def test_skills_catalog(self, served):
        model, client = served
        r = client.get("/skills")
        assert r.status_code == 200
        body = r.json()
        assert body["skills"] == list(model.vocab.skills)
        assert body["levels"] == list(model.vocab.levels)

    def test_prototypes_export(self, served):
        model, client = served
        r = client.get("/prototypes")
        assert r.status_code == 200
        body = r.json()
        assert len(body) == model.n_prototypes
        assert {"id", "skills", "mean_salary_weight"} <= set(body[0])

    def test_predict_matches_library(self, served):
        model, client = served
        names = [model.vocab.skills[i] for i in (0, 1, 2)]
        r = client.post("/predict", json={"skills": [{"name": n} for n in names]})
        assert r.status_code == 200
        body = r.json()
        sample = encode_query([(n, None) for n in names], {}, model.vocab)
        y, _ = model.predict(sample)
        assert body["salary"] == pytest.approx(y, abs=1e-6)
        contributions = [p["contribution"] for p in body["explanation"]["prototypes"]]
        assert sum(contributions) == pytest.approx(body["salary"], abs=1e-6)

    def test_unknown_skill_400_names_it(self, served):
        _, client = served
        r = client.post("/predict", json={"skills": [{"name": "Underwater Basketweaving"}]})
        assert r.status_code == 400
        assert "Underwater Basketweaving" in r.json()["detail"]

    def test_empty_skills_422(self, served):
        _, client = served
        r = client.post("/predict", json={"skills": []})
        assert r.status_code == 422

    def test_unknown_level_400(self, served):
        model, client = served
        name = model.vocab.skills[0]
        r = client.post("/predict", json={"skills": [{"name": name, "level": "Wizard"}]})
        assert r.status_code == 400
        assert "Wizard" in r.json()["detail"]

    def test_concurrent_requests_identical(self, served):
        model, client = served
        names = [model.vocab.skills[i] for i in (3, 4, 5, 6)]
        payload = {"skills": [{"name": n} for n in names]}

        def call(_):
            return client.post("/predict", json=payload).text

        with ThreadPoolExecutor(max_workers=8) as pool:
            bodies = list(pool.map(call, range(32)))
        assert len(set(bodies)) == 1
        assert json.loads(bodies[0])["salary"] > 0
