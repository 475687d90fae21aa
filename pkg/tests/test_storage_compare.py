import numpy as np
import pandas as pd
import pytest

from app.errors import InvalidInput
from app.models.history import HistoryRecord
from app.services import storage
from app.services.compare import compare
from app.services.pgd import Decomposition, Mode, TimeGrid


@pytest.fixture
def record(rng):
    n = 21
    return HistoryRecord(
        displacements=rng.normal(size=(n, 4)),
        load_factors=np.linspace(0.0, 1.0, n),
        steps_per_cycle=6,
        energy={"dissipation": np.cumsum(rng.uniform(size=n))},
        probes={"head_deflection": rng.normal(size=n)},
        iterations=np.full(n, 2),
        cycle_states={0: {"eps_p": np.zeros(3)}, 5: {"eps_p": rng.normal(size=3)}},
        metadata={"solver": "incremental"},
    )


def scaled(record, factor):
    return HistoryRecord(
        displacements=factor * record.displacements,
        load_factors=record.load_factors,
        steps_per_cycle=record.steps_per_cycle,
        energy={k: factor * v for k, v in record.energy.items()},
        probes={k: factor * v for k, v in record.probes.items()},
        boundary_jumps=np.array([0.1, 0.3, 0.2]),
    )


class TestCompare:
    def test_identical_histories(self, record):
        report = compare(record, record)
        assert report["displacement"]["relative_l2"] == 0.0
        assert report["displacement"]["max_abs"] == 0.0
        assert report["per_cycle"]["values"].shape == (4,)
        assert report["jumps"]["max"] == 0.0

    def test_doubled_history(self, record):
        report = compare(record, scaled(record, 2.0))
        assert report["displacement"]["relative_l2"] == pytest.approx(1.0)
        assert report["dissipation"]["relative_l2"] == pytest.approx(1.0)
        assert report["head_deflection"]["max_relative"] == pytest.approx(1.0)
        assert report["per_cycle"]["max_relative_l2"] == pytest.approx(1.0)
        assert report["jumps"]["max"] == pytest.approx(0.3)

    def test_selection(self, record):
        other = scaled(record, 1.0)
        other.displacements[:, 2] += 1.0
        assert compare(record, other, selection=[0, 1])["selection"]["relative_l2"] == 0.0
        assert compare(record, other, selection=[2])["selection"]["max_abs"] == pytest.approx(1.0)
        assert compare(record, other, selection="head_deflection")["selection"]["relative_l2"] == 0.0
        with pytest.raises(InvalidInput):
            compare(record, other, selection="nowhere")
        with pytest.raises(InvalidInput):
            compare(record, other, selection=[7])

    def test_mismatched_grids(self, record):
        shorter = HistoryRecord(record.displacements[:16], record.load_factors[:16], 6)
        with pytest.raises(InvalidInput):
            compare(record, shorter)
        narrower = HistoryRecord(record.displacements[:, :3], record.load_factors, 6)
        with pytest.raises(InvalidInput):
            compare(record, narrower)


class TestHistoryBundle:
    def test_chunked_round_trip(self, tmp_path, record):
        record.complete = False
        sidecar = storage.save_history(record, tmp_path, {"scenario": "unit"}, chunk_steps=4)
        meta = storage.read_json(sidecar)
        assert len(meta["chunks"]) == 6
        assert meta["complete"] is False

        loaded = storage.load_history(tmp_path)
        assert np.array_equal(loaded.displacements, record.displacements)
        assert np.array_equal(loaded.energy["dissipation"], record.energy["dissipation"])
        assert np.array_equal(loaded.probes["head_deflection"], record.probes["head_deflection"])
        assert np.array_equal(loaded.iterations, record.iterations)
        assert sorted(loaded.cycle_states) == [0, 5]
        assert np.array_equal(loaded.cycle_states[5]["eps_p"], record.cycle_states[5]["eps_p"])
        assert loaded.metadata["scenario"] == "unit"
        assert not loaded.complete

    def test_missing_bundle(self, tmp_path):
        with pytest.raises(InvalidInput):
            storage.load_history(tmp_path / "absent")

    def test_foreign_schema(self, tmp_path, record):
        storage.save_history(record, tmp_path)
        meta = storage.read_json(tmp_path / "history.json")
        meta["schema_version"] = 99
        storage.write_json(tmp_path / "history.json", meta)
        with pytest.raises(InvalidInput):
            storage.load_history(tmp_path / "history.json")

    def test_json_sanitizes_numpy(self, tmp_path):
        storage.write_json(tmp_path / "x.json", {"a": np.arange(2), "b": np.float64(1.5), "c": float("nan"), 3: (1, 2)})
        assert storage.read_json(tmp_path / "x.json") == {"a": [0, 1], "b": 1.5, "c": None, "3": [1, 2]}


def test_decomposition_round_trip(tmp_path, rng):
    grid = TimeGrid(n_tau=3, scales=(2, 2))
    modes = [Mode(rng.normal(size=(3, 4)), [rng.normal(size=2), rng.normal(size=2)], zeta=z) for z in (2.0, 0.5)]
    decomposition = Decomposition(grid, modes, log=[{"mode": 1, "energies": [1.0, 0.5]}])
    storage.save_decomposition(decomposition, tmp_path, {"max_modes": 2})
    loaded = storage.load_decomposition(tmp_path)
    assert loaded.grid == grid
    assert np.allclose(loaded.zetas, [2.0, 0.5])
    assert np.allclose(loaded.reconstruct(), decomposition.reconstruct())
    assert loaded.log == decomposition.log


class TestCsv:
    def test_trace_columns(self, tmp_path, record):
        path = storage.export_trace_csv(record, tmp_path / "trace.csv", ["head_deflection"])
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["step", "cycle", "load_factor", "head_deflection"]
        assert len(frame) == 21
        assert frame["cycle"].iloc[-1] == 3
        with pytest.raises(InvalidInput):
            storage.export_trace_csv(record, tmp_path / "bad.csv", ["nowhere"])

    def test_dof_traces(self, tmp_path, record):
        frame = pd.read_csv(storage.export_dofs_csv(record, tmp_path / "dofs.csv", [0, 3]))
        assert list(frame.columns) == ["step", "u_0", "u_3"]
        assert np.allclose(frame["u_3"], record.displacements[:, 3])
        with pytest.raises(InvalidInput):
            storage.export_dofs_csv(record, tmp_path / "bad.csv", [4])

    def test_modes_and_report(self, tmp_path, record, rng):
        grid = TimeGrid(n_tau=3, scales=(2, 3))
        decomposition = Decomposition(grid, [Mode(rng.normal(size=(3, 4)), [np.ones(2), np.ones(3)], zeta=1.5)])
        theta = pd.read_csv(storage.export_theta_csv(decomposition, tmp_path / "theta.csv"))
        assert len(theta) == 5
        assert theta["scale"].tolist() == [1, 1, 2, 2, 2]
        zeta = pd.read_csv(storage.export_zeta_csv(decomposition, tmp_path / "zeta.csv"))
        assert zeta["zeta"].tolist() == [1.5]

        report = pd.read_csv(storage.export_report_csv(compare(record, scaled(record, 2.0)), tmp_path / "report.csv"))
        row = report[(report["quantity"] == "displacement") & (report["metric"] == "relative_l2")]
        assert row["value"].iloc[0] == pytest.approx(1.0)
