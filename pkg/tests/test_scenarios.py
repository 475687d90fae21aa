import json

import numpy as np
import pytest

from app.errors import ConfigError
from app.models.scenario import dump_scenario, load_scenario, parse_scenario
from app.services.scenarios import (
    build_problem,
    builtin_names,
    execute,
    get_builtin,
    pgd_grid,
    resolve_scenario,
    scenario_dof_counts,
    self_check,
    window_loads,
)


def builtin_data(name):
    return json.loads(get_builtin(name).json())


class TestBuiltins:
    def test_names(self):
        assert builtin_names() == ["monopile-paper", "plate-elastic", "plate-paper"]

    @pytest.mark.parametrize("name", ["monopile-paper", "plate-elastic", "plate-paper"])
    def test_builtins_pass_self_check(self, name):
        scenario = get_builtin(name)
        assert scenario.name == name
        self_check(scenario)

    def test_self_check_catches_drift(self):
        data = builtin_data("plate-paper")
        data["material"]["sigma_p"] = 101.0
        with pytest.raises(ConfigError) as info:
            self_check(parse_scenario(data))
        assert info.value.field == "material.sigma_p"

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError):
            get_builtin("nowhere")

    def test_round_trip_through_file(self, tmp_path):
        scenario = get_builtin("monopile-paper")
        path = tmp_path / "monopile.json"
        dump_scenario(scenario, path)
        assert load_scenario(path).dict() == scenario.dict()
        assert resolve_scenario(str(path)).name == "monopile-paper"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve_scenario(tmp_path / "absent.json")


class TestValidation:
    def test_non_periodic_shape(self):
        data = builtin_data("plate-paper")
        data["load"]["shape"] = [[0.0, 0.0], [1.0, 1.0]]
        with pytest.raises(ConfigError) as info:
            parse_scenario(data)
        assert info.value.field == "load.shape"

    def test_json_error_reports_line(self):
        with pytest.raises(ConfigError) as info:
            parse_scenario('{\n  "name": "x",\n  oops\n}')
        assert info.value.line == 3

    def test_pgd_cycle_count_must_match_scales(self):
        data = builtin_data("plate-paper")
        data["solver"] = "pgd"
        data["load"]["cycles"] = 30
        with pytest.raises(ConfigError):
            parse_scenario(data)

    def test_pgd_needs_scales(self):
        data = builtin_data("plate-elastic")
        data["load"]["scales"] = None
        data["load"]["scale_amplitudes"] = None
        with pytest.raises(ConfigError):
            parse_scenario(data)

    def test_scale_amplitudes_must_match_scales(self):
        data = builtin_data("plate-elastic")
        data["load"]["scale_amplitudes"] = [[1.0, 2.0], [1.0]]
        with pytest.raises(ConfigError):
            parse_scenario(data)

    def test_layers_must_partition_the_pile(self, pile_scenario_data):
        pile_scenario_data["pile"]["layers"][1]["top"] = 6.0
        with pytest.raises(ConfigError):
            parse_scenario(pile_scenario_data)

    def test_unknown_kind(self):
        data = builtin_data("plate-paper")
        data["kind"] = "shell"
        with pytest.raises(ConfigError) as info:
            parse_scenario(data)
        assert info.value.field == "kind"


class TestOverrides:
    def test_cycles_and_scales_name_the_window(self):
        scenario = get_builtin("plate-paper").with_overrides(cycles=200, scales=[20, 10], solver="pgd")
        assert scenario.load.cycles == 202
        assert scenario.load.scales == [20, 10]
        assert scenario.solver == "pgd"

    def test_scales_alone_recount_cycles(self):
        scenario = get_builtin("plate-paper").with_overrides(scales=[3, 3])
        assert scenario.load.cycles == 11

    def test_cycles_alone_drop_the_scales(self):
        scenario = get_builtin("plate-paper").with_overrides(cycles=10)
        assert scenario.load.cycles == 10
        assert scenario.load.scales is None
        with pytest.raises(ConfigError):
            pgd_grid(scenario)

    def test_cycles_alone_rejected_for_pgd(self):
        with pytest.raises(ConfigError):
            get_builtin("plate-elastic").with_overrides(cycles=10)

    def test_modes_and_seed(self):
        scenario = get_builtin("plate-paper").with_overrides(modes=5, seed=11)
        assert scenario.pgd.max_modes == 5
        assert scenario.seed == 11


class TestProblems:
    def test_plate_dofs(self):
        assert build_problem(get_builtin("plate-paper")).n_dofs == 1630

    def test_monopile_dofs_and_counts(self):
        scenario = get_builtin("monopile-paper")
        problem = build_problem(scenario)
        assert problem.n_dofs == 92
        assert scenario_dof_counts(scenario, problem.n_dofs) == (184_000_000, 28_776)


class TestLoads:
    def test_plate_program_range(self):
        loads = get_builtin("plate-paper").load.step_loads()
        assert loads.size == 100 * 22 + 1
        assert loads.min() == pytest.approx(-50.0)
        assert loads.max() == pytest.approx(250.0)
        assert loads[0] == pytest.approx(0.0)

    def test_window_matches_step_loads(self):
        scenario = get_builtin("plate-paper")
        window = window_loads(scenario)
        assert window.shape == (101, 20)
        steps = scenario.load.step_loads()
        offset = 100 * scenario.load.warmup_cycles
        for c in range(20):
            assert np.allclose(window[:, c], steps[offset + 100 * c: offset + 100 * c + 101])

    def test_modulated_window(self):
        scenario = get_builtin("plate-elastic")
        window = window_loads(scenario)
        steps = scenario.load.step_loads()
        assert window.shape == (21, 20)
        assert np.allclose(window[:, 0], window[:, 1] / 0.8)
        for c in range(20):
            assert np.allclose(window[1:, c], steps[20 * c + 1: 20 * c + 21])


def test_pgd_run_writes_bundle(tmp_path, pile_scenario_data):
    scenario = parse_scenario(pile_scenario_data)
    outcome = execute(scenario, tmp_path / "run")
    out = outcome.out_dir
    for name in ("scenario.json", "history.json", "decomposition.json", "theta.csv", "zeta.csv", "report.csv", "trace.csv"):
        assert (out / name).exists(), name
    assert (out / "oracle" / "history.json").exists()
    assert outcome.record.n_steps == 10 * 6 + 1
    assert outcome.report["displacement"]["relative_l2"] < 0.1
    assert "final_moment" in outcome.report
    assert outcome.metadata["dof_counts"] == {"incremental": 92 * 10 * 4, "pgd": 2 * 92 * 11 + 2 * 4}
