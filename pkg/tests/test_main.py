import pytest
from fastapi.testclient import TestClient

from etsim import main
from etsim.io_utils import write_report
from etsim.models import RunReport


@pytest.fixture
def client(monkeypatch, tmp_path):
    monkeypatch.setenv("ETSIM_NO_DOTENV", "1")
    monkeypatch.setenv("ETSIM_OUTPUT_DIR", str(tmp_path))
    with TestClient(main.app) as test_client:
        yield test_client


def test_health_check(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_list_scenarios(client):
    response = client.get("/scenarios")
    assert response.status_code == 200
    assert [entry["id"] for entry in response.json()][:2] == ["fig2", "fig3b"]


def test_run_unknown_scenario(client):
    response = client.post("/scenarios/fig9/run")
    assert response.status_code == 404


def test_run_rejects_bad_override(client):
    response = client.post("/scenarios/fig2/run", json={"rtol": -1.0})
    assert response.status_code == 422


def test_run_accepts_and_queues(client, monkeypatch):
    called = {}

    def fake_run_scenario(cfg):
        called["scenario"] = cfg.scenario
        called["n_cutoff"] = cfg.n_cutoff

    monkeypatch.setattr(main, "run_scenario", fake_run_scenario)
    response = client.post("/scenarios/fig3b/run", json={"n_cutoff": 8})
    assert response.status_code == 200
    assert response.json()["status"] == "accepted"
    assert called == {"scenario": "fig3b", "n_cutoff": 8}


def test_report_lookup(client, tmp_path):
    assert client.get("/reports/fig9").status_code == 404
    assert client.get("/reports/fig2").status_code == 404
    report = RunReport(scenario="fig2", version="0.1.0", seed=0, created_at="2024-01-01T00:00:00")
    write_report(tmp_path / "fig2_report.json", report)
    response = client.get("/reports/fig2")
    assert response.status_code == 200
    assert response.json()["scenario"] == "fig2"


def test_unreadable_report(client, tmp_path):
    (tmp_path / "appE_report.json").write_text("{not json", encoding="utf-8")
    assert client.get("/reports/appE").status_code == 500
