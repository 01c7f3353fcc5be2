import dataclasses
import json
import math

import pytest

from iea_sim import cli
from iea_sim.harness import (ScenarioConfig, ScenarioError, compare_runs,
                             export_plot_data, load_scenario,
                             point_to_polyline, read_run_csv, run_columns,
                             summarize, write_run_csv)

from conftest import make_camera


def small_cfg(**kw):
    base = load_scenario("straight_3ms")
    return dataclasses.replace(base, **kw)


class TestScenarioConfig:
    def test_zero_cameras_rejected(self):
        with pytest.raises(ScenarioError):
            small_cfg(cameras=[])

    def test_bad_mode_rejected(self):
        with pytest.raises(ScenarioError):
            small_cfg(mode="networked")

    def test_bad_rate_rejected(self):
        with pytest.raises(ScenarioError):
            small_cfg(control_rate_hz=0.0)

    def test_spacing_contradiction_rejected(self):
        cams = [make_camera(x=0.0), make_camera(x=41.0)]
        with pytest.raises(ScenarioError):
            small_cfg(cameras=cams, camera_spacing_m=40.0)

    def test_json_roundtrip_is_identity(self):
        cfg = load_scenario("straight_3ms")
        obj = cfg.to_json_obj()
        assert ScenarioConfig.from_json_obj(obj).to_json_obj() == obj

    def test_unknown_bundled_name(self):
        with pytest.raises(ScenarioError):
            load_scenario("no_such_scenario")

    def test_plan_hash_tracks_waypoints(self):
        a = load_scenario("straight_3ms")
        b = dataclasses.replace(
            a, plan=dataclasses.replace(
                a.plan, waypoints=a.plan.waypoints[:-1] + ((165.0, 4.0),)))
        assert a.plan_hash() == load_scenario("straight_3ms").plan_hash()
        assert a.plan_hash() != b.plan_hash()

    def test_node_addresses_distinct(self):
        cfg = load_scenario("straight_3ms")
        addrs = [cfg.node_addr(n) for n in ["veh"] + cfg.mssp_ids()]
        assert len(set(addrs)) == len(addrs)


class TestPointToPolyline:
    def test_perpendicular_foot(self):
        d, pt = point_to_polyline(5.0, 3.0, [(0, 0), (10, 0)])
        assert d == pytest.approx(3.0)
        assert pt == (pytest.approx(5.0), pytest.approx(0.0))

    def test_beyond_endpoint_clamps(self):
        d, pt = point_to_polyline(14.0, 3.0, [(0, 0), (10, 0)])
        assert d == pytest.approx(5.0)
        assert pt == (pytest.approx(10.0), pytest.approx(0.0))

    def test_picks_nearest_segment(self):
        d, _ = point_to_polyline(10.0, 9.0, [(0, 0), (10, 0), (10, 10)])
        assert d == pytest.approx(0.0, abs=1e-12)


class TestRunCsvRoundtrip:
    def test_values_roundtrip_exactly(self, tmp_path):
        cfg = small_cfg()
        mids = cfg.mssp_ids()
        rows = []
        for i in range(5):
            r = {"t": i * 0.02, "true_x": 1.0 / 3.0 + i, "true_y": -0.1 * i,
                 "true_psi": 0.123456789012345678, "true_v": 3.0,
                 "fused_x": None if i == 0 else 1.5 + i, "fused_y": 0.25,
                 "yaw_rate_cmd": 0.1, "v_cmd": 3.0, "phase": "driving"}
            for m in mids:
                r[f"{m}_x"], r[f"{m}_y"] = (None, None) if i < 2 else (40.0, 0.5)
            rows.append(r)
        path = tmp_path / "run.csv"
        write_run_csv(path, rows, cfg)
        meta, cols, back = read_run_csv(path)
        assert meta["plan"] == cfg.plan_hash()
        assert meta["mssps"].split(",") == mids
        assert cols == run_columns(mids)
        assert back == rows  # repr-format floats parse back bit-identically


def _assert_json_close(a, b, path="$"):
    if isinstance(a, dict):
        assert isinstance(b, dict) and set(a) == set(b), path
        for k in a:
            _assert_json_close(a[k], b[k], f"{path}.{k}")
    elif isinstance(a, list):
        assert isinstance(b, list) and len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            _assert_json_close(x, y, f"{path}[{i}]")
    elif isinstance(a, float) or isinstance(b, float):
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9), path
    else:
        assert a == b, path


class TestSummary:
    def test_summary_recomputable_from_csvs(self, run_3ms):
        # rebuild every statistic from the logged CSVs alone and match the
        # summary.json the run wrote
        out = run_3ms.out_dir
        cfg = ScenarioConfig.from_json_obj(
            json.loads((out / "scenario.json").read_text()))
        _meta, _cols, rows = read_run_csv(out / "run.csv")
        _m, _c, est_rows = read_run_csv(out / "estimates.csv")
        _m, _c, net_rows = read_run_csv(out / "net_metrics.csv")
        est_records = [(r["mssp_id"], r["seq"], r["t_capture"], r["t_received"],
                        r["x"], r["y"]) for r in est_rows]
        net_records = [(r["t_received"], r["sender"], r["receiver"], r["bytes"],
                        r["latency"]) for r in net_rows]
        recomputed = summarize(rows, est_records, net_records, cfg)
        stored = json.loads((out / "summary.json").read_text())
        _assert_json_close(recomputed, stored)


class TestCompareRuns:
    def test_self_compare_is_zero(self, run_3ms):
        rep = compare_runs(run_3ms.out_dir / "run.csv",
                           run_3ms.out_dir / "run.csv")
        assert rep["max_m"] == 0.0
        assert rep["rms_m"] == 0.0
        assert rep["n"] > 100

    def test_mismatched_plans_rejected(self, run_3ms, tmp_path):
        cfg = small_cfg(plan=dataclasses.replace(
            small_cfg().plan, waypoints=((0.0, 0.0), (10.0, 0.0))))
        other = tmp_path / "run.csv"
        write_run_csv(other, [{"t": 0.0, "true_x": 0.0, "true_y": 0.0}], cfg)
        with pytest.raises(ValueError, match="different waypoint plans"):
            compare_runs(run_3ms.out_dir / "run.csv", other)

    def test_disjoint_time_ranges_rejected(self, tmp_path):
        cfg = small_cfg()
        def mk(name, t0):
            rows = [{"t": t0 + i * 0.02, "true_x": 0.0, "true_y": 0.0}
                    for i in range(5)]
            p = tmp_path / name
            write_run_csv(p, rows, cfg)
            return p
        with pytest.raises(ValueError, match="disjoint"):
            compare_runs(mk("a.csv", 0.0), mk("b.csv", 100.0))

    def test_t_max_truncates_window(self, run_3ms):
        rep = compare_runs(run_3ms.out_dir / "run.csv",
                           run_3ms.out_dir / "run.csv", t_max=5.0)
        assert rep["t_end"] <= 5.0


class TestExportPlotData:
    def test_column_layout(self, run_3ms, tmp_path):
        est_path, cl_path = export_plot_data(run_3ms.out_dir / "run.csv",
                                             tmp_path)
        n = len(run_3ms.cfg.mssp_ids())
        header = est_path.read_text().splitlines()[0].split(",")
        assert len(header) == 4 + 2 * n + 2
        assert header[:4] == ["t", "true_x", "true_y", "true_psi"]
        assert header[-2:] == ["fused_x", "fused_y"]
        cl_header = cl_path.read_text().splitlines()[0]
        assert cl_header == "t,actual_x,actual_y,desired_x,desired_y,cross_track"

    def test_row_counts_match_log(self, run_3ms, tmp_path):
        est_path, cl_path = export_plot_data(run_3ms.out_dir / "run.csv",
                                             tmp_path)
        n_rows = len(run_3ms.rows)
        assert len(est_path.read_text().splitlines()) == n_rows + 1
        assert len(cl_path.read_text().splitlines()) == n_rows + 1

    def test_empty_log_gives_headers_only(self, tmp_path):
        cfg = small_cfg()
        log = tmp_path / "run.csv"
        write_run_csv(log, [], cfg)
        est_path, cl_path = export_plot_data(log, tmp_path / "plots")
        assert len(est_path.read_text().splitlines()) == 1
        assert len(cl_path.read_text().splitlines()) == 1


class TestCli:
    def test_run_short_scenario(self, tmp_path, capsys):
        scen = {
            "name": "cli_smoke",
            "duration_cap_s": 1.0,
            "plan": {"waypoints": [[0, 0], [30, 0]]},
            "vehicle": {"start": [2.0, 0.0, 0.0]},
            "cameras": [{"x": 6.0, "y": 0.0, "z": 9.0,
                         "pitch_rad": math.pi / 4,
                         "fx": 418.7162709997704, "fy": 418.7162709997704,
                         "cx": 400.0, "cy": 300.0,
                         "width": 800, "height": 600}],
        }
        path = tmp_path / "scen.json"
        path.write_text(json.dumps(scen))
        rc = cli.main(["run", "--scenario", str(path),
                       "--out", str(tmp_path / "out")])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["scenario"] == "cli_smoke"
        assert (tmp_path / "out" / "run.csv").exists()

    def test_run_unknown_scenario_exit_1(self, capsys):
        assert cli.main(["run", "--scenario", "nope"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_compare_exit_codes(self, run_3ms, tmp_path, capsys):
        a = str(run_3ms.out_dir / "run.csv")
        assert cli.main(["compare", a, a]) == 0
        missing = str(tmp_path / "absent.csv")
        assert cli.main(["compare", a, missing]) == 1

    def test_export_cli(self, run_3ms, tmp_path, capsys):
        rc = cli.main(["export", str(run_3ms.out_dir / "run.csv"),
                       "--out", str(tmp_path / "plots")])
        assert rc == 0
        assert (tmp_path / "plots" / "closed_loop.csv").exists()
