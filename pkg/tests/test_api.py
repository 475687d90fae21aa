import pytest
from fastapi.testclient import TestClient

from app.main import app, db_manager


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def add_run(scenario="api-plate", **extra):
    data = {
        "scenario": scenario,
        "kind": "plane-strain",
        "solver": "pgd",
        "modes": 3,
        "cycles": 22,
        "status": "completed",
        "config_hash": "0" * 64,
        "wall_time": 1.5,
        **extra,
    }
    return db_manager.add_run(data)


def test_health(client):
    assert client.get("/health").json()["status"] == "healthy"
    assert "version" in client.get("/api").json()


class TestScenarios:
    def test_list(self, client):
        names = [s["name"] for s in client.get("/api/scenarios").json()]
        assert names == ["monopile-paper", "plate-elastic", "plate-paper"]

    def test_detail(self, client):
        body = client.get("/api/scenarios/monopile-paper").json()
        assert body["pile"]["n_elements"] == 45
        assert body["load"]["scales"] == [200, 100]

    def test_unknown(self, client):
        assert client.get("/api/scenarios/nowhere").status_code == 404

    def test_validate(self, client):
        scenario = client.get("/api/scenarios/plate-paper").json()
        ok = client.post("/api/validate", json={"scenario": scenario})
        assert ok.status_code == 200
        assert ok.json()["valid"] is True

        scenario["load"]["shape"] = [[0.0, 0.0], [1.0, 1.0]]
        bad = client.post("/api/validate", json={"scenario": scenario})
        assert bad.status_code == 422
        assert bad.json()["detail"]["field"] == "load.shape"


class TestDofCounts:
    def test_monopile_grid(self, client):
        body = client.post("/api/dof-counts", json={"n_dofs": 92, "n_tau": 101, "scales": [200, 100], "modes": 3}).json()
        assert body == {"incremental": 184_000_000, "pgd": 28_776, "n_cycles": 20_000, "n_steps": 2_000_001}

    def test_rejects_bad_grid(self, client):
        response = client.post("/api/dof-counts", json={"n_dofs": 92, "n_tau": 1, "scales": [2], "modes": 3})
        assert response.status_code == 422
        response = client.post("/api/dof-counts", json={"n_dofs": 92, "n_tau": 11, "scales": [0], "modes": 3})
        assert response.status_code == 422


class TestRuns:
    def test_get_and_delete(self, client):
        run = add_run()
        assert client.get(f"/api/runs/{run['id']}").json()["scenario"] == "api-plate"
        assert client.delete(f"/api/runs/{run['id']}").status_code == 200
        assert client.get(f"/api/runs/{run['id']}").status_code == 404
        assert client.delete(f"/api/runs/{run['id']}").status_code == 404

    def test_filters(self, client):
        add_run(scenario="api-filter", status="failed", error="diverged")
        add_run(scenario="api-filter", solver="incremental", modes=None)
        runs = client.get("/api/runs", params={"scenario": "api-filter"}).json()
        assert len(runs) == 2
        assert runs[0]["id"] > runs[1]["id"]
        failed = client.get("/api/runs", params={"scenario": "api-filter", "status": "failed"}).json()
        assert [r["error"] for r in failed] == ["diverged"]
        assert len(client.get("/api/runs", params={"scenario": "api-filter", "limit": 1}).json()) == 1

    def test_stats(self, client):
        add_run(scenario="api-stats")
        stats = client.get("/api/stats").json()
        assert stats["total_runs"] >= 1
        assert "api-stats" in stats["scenarios"]
        assert stats["total_wall_time"] >= 1.5
