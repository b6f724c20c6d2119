import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from starlette.testclient import TestClient

from pobandit.config import load_fixture
from pobandit.service import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


ARM_SPEC = {
    "label": "svc",
    "transition": [[0.514, 0.321, 0.165], [0.123, 0.159, 0.718], [0.420, 0.195, 0.385]],
    "rewards": [0.0, 2.0, 3.0],
    "initial_belief": [0.279, 0.618, 0.103],
}


class TestHealth:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"


class TestIndexEndpoint:
    def test_extreme_point_returns_state_reward(self, client):
        resp = client.post(
            "/index",
            json={"arm": ARM_SPEC, "belief": [0.0, 1.0, 0.0], "discount": 0.9},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["value"] == pytest.approx(2.0, abs=1e-9)
        assert body["fallback_used"] is False
        assert len(body["crossing_rows"]) == 3
        assert len(body["g_rows"]) == 3

    def test_never_crossings_serialize_as_null(self, client):
        resp = client.post(
            "/index",
            json={"arm": ARM_SPEC, "belief": [0.0, 0.0, 1.0], "discount": 0.9},
        )
        body = resp.json()
        assert body["crossing_rows"] == [None, None, None]
        assert body["crossing_drift"] is None
        assert body["value"] == pytest.approx(3.0, abs=1e-9)

    def test_off_simplex_belief_rejected(self, client):
        resp = client.post(
            "/index",
            json={"arm": ARM_SPEC, "belief": [0.9, 0.4, 0.1], "discount": 0.9},
        )
        assert resp.status_code == 422

    def test_bad_transition_rejected(self, client):
        arm = dict(ARM_SPEC)
        arm["transition"] = [[0.9, 0.2, 0.1], [0.1, 0.2, 0.7], [0.3, 0.3, 0.4]]
        resp = client.post(
            "/index", json={"arm": arm, "belief": [0.3, 0.3, 0.4], "discount": 0.9}
        )
        assert resp.status_code == 422

    def test_descending_rewards_relabeled(self, client):
        arm = {
            "label": "desc",
            "transition": [[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4]],
            "rewards": [0.0, 2.0, 1.0],
            "initial_belief": [0.3, 0.3, 0.4],
        }
        resp = client.post(
            "/index", json={"arm": arm, "belief": [0.0, 1.0, 0.0], "discount": 0.9}
        )
        body = resp.json()
        assert body["state_relabeling"] == [0, 2, 1]
        assert body["value"] == pytest.approx(2.0, abs=1e-9)


class TestCompareEndpoint:
    def test_small_compare_shapes(self, client):
        cfg = load_fixture("experiment1")
        resp = client.post(
            "/compare",
            json={
                "config": cfg.model_dump(),
                "machine": "machine1",
                "runs": 4,
                "horizon": 12,
            },
        )
        assert resp.status_code == 200
        body = resp.json()
        lines = [l for l in body["csv"].splitlines() if not l.startswith("#")]
        assert lines[0] == "policy,t,mean_cum_discounted_reward,stderr,runs"
        assert len(lines) == 1 + 2 * 12  # two policies x horizon
        companion = [l for l in body["companion_csv"].splitlines() if not l.startswith("#")]
        assert companion[0] == "t,whittle_myopic_agreement,whittle_fallback_rate"
        assert len(companion) == 1 + 12
        assert body["summary"]["fallback_evals"] == 0

    def test_deterministic_given_seed(self, client):
        cfg = load_fixture("experiment1")
        payload = {
            "config": cfg.model_dump(),
            "machine": "machine2",
            "runs": 3,
            "horizon": 10,
            "seed": 123,
        }
        a = client.post("/compare", json=payload).json()
        b = client.post("/compare", json=payload).json()
        assert a["csv"] == b["csv"]
        assert a["companion_csv"] == b["companion_csv"]

    def test_unknown_machine_rejected(self, client):
        cfg = load_fixture("experiment1")
        resp = client.post(
            "/compare", json={"config": cfg.model_dump(), "machine": "machine9"}
        )
        assert resp.status_code == 422

    def test_dp_size_guard_propagates(self, client):
        cfg = load_fixture("experiment1")  # 7 arms: far beyond the DP guard
        resp = client.post(
            "/compare",
            json={
                "config": cfg.model_dump(),
                "machine": "machine1",
                "runs": 1,
                "horizon": 3,
                "policies": ["optimal_dp"],
            },
        )
        assert resp.status_code == 422

    def test_toy_three_curve_comparison_keeps_dp_on_top(self, client):
        toy = {
            "name": "toy2",
            "discount": 0.9,
            "horizon": 8,
            "runs": 200,
            "select_count": 1,
            "policies": ["optimal_dp", "whittle", "myopic"],
            "seed": 5,
            "machines": [
                {
                    "name": "m",
                    "arms": [
                        {
                            "label": "a1",
                            "transition": [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.4, 0.5]],
                            "rewards": [0.0, 1.0, 2.5],
                            "initial_belief": [0.5, 0.3, 0.2],
                        },
                        {
                            "label": "a2",
                            "transition": [[0.4, 0.4, 0.2], [0.3, 0.3, 0.4], [0.5, 0.2, 0.3]],
                            "rewards": [0.0, 0.8, 2.0],
                            "initial_belief": [0.2, 0.5, 0.3],
                        },
                    ],
                }
            ],
        }
        resp = client.post("/compare", json={"config": toy})
        assert resp.status_code == 200
        summary = resp.json()["summary"]
        means = summary["final_mean_cum_discounted"]
        errs = summary["final_stderr"]
        for pol in ("whittle", "myopic"):
            assert means["optimal_dp"] >= means[pol] - 3 * errs[pol] - 3 * errs["optimal_dp"]


class TestVerifyEndpoint:
    def test_zero_size_is_empty_with_warning(self, client):
        body = client.post("/verify", json={"size": 0.0}).json()
        assert body["all_passed"] is True
        assert body["checks"] == []
        assert "size 0" in body["warning"]

    def test_small_suite_passes(self, client):
        body = client.post("/verify", json={"size": 0.01, "seed": 4}).json()
        assert body["all_passed"] is True
        assert len(body["checks"]) == 4

    def test_corrupt_hook_fails_crossing_check(self, client):
        body = client.post(
            "/verify", json={"size": 0.01, "seed": 4, "corrupt_analytic": True}
        ).json()
        assert body["all_passed"] is False
        crossing = body["checks"][0]
        assert crossing["failures"] > 0
