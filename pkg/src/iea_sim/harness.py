"""Scenario configuration, experiment orchestration, logs and summaries.

A scenario is one JSON document (cameras, waypoint plan, controller and
link parameters, mode, seed). Runs execute either in single-process
lockstep (deterministic: byte-identical CSVs for identical scenario+seed)
or distributed, with one OS process per node talking UDP on loopback.

Outputs per run directory:
  scenario.json    resolved copy of the scenario actually run
  run.csv          one row per control step (truth, fused, per-MSSP estimates)
  estimates.csv    every estimate received by the vehicle
  net_metrics.csv  every datagram delivery (bytes, one-way latency)
  summary.json     statistics recomputable from the CSVs alone
"""

from __future__ import annotations

import hashlib
import json
import math
import subprocess
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .control import ControllerParams, WaypointPlan
from .dynamics import VehicleParams, VehicleState
from .fusion import FusionState
from .geometry import Pose2D, WorldPoint, CameraModel
from .netbus import (EstimateMessage, LinkConfig, LockstepNetwork,
                     UdpTransport, latency_percentiles)
from .nodes import CellLayout, MsspNode, VehicleNode, STOPPED

SCHEMA_VERSION = 1
STOP_TAIL_S = 2.0  # keep logging this long after the stop is commanded


class ScenarioError(ValueError):
    """Scenario fails validation."""


@dataclass
class ScenarioConfig:
    name: str
    cameras: list[CameraModel]
    plan: WaypointPlan
    controller: ControllerParams
    vehicle_params: VehicleParams
    link: LinkConfig
    mode: str = "lockstep"
    seed: int = 0
    duration_cap_s: float = 90.0
    control_rate_hz: float = 50.0
    frame_rate_hz: float = 20.0
    position_source: str = "cameras"
    vehicle_start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    vehicle_dims: tuple[float, float] = (4.5, 2.0)
    staleness_timeout_s: float = 0.25
    grace_period_s: float = 2.0
    noise_sigma: float = 0.0
    host: str = "127.0.0.1"
    base_port: int = 47800
    camera_spacing_m: Optional[float] = None

    def __post_init__(self):
        if not self.cameras:
            raise ScenarioError("scenario needs at least one camera")
        if self.duration_cap_s <= 0:
            raise ScenarioError("duration cap must be positive")
        if self.mode not in ("lockstep", "distributed"):
            raise ScenarioError(f"unknown mode {self.mode!r}")
        if self.position_source not in ("cameras", "truth"):
            raise ScenarioError(f"unknown position source {self.position_source!r}")
        if self.control_rate_hz <= 0 or self.frame_rate_hz <= 0:
            raise ScenarioError("rates must be positive")
        if not 1024 <= self.base_port <= 65535 - len(self.cameras):
            raise ScenarioError("base_port leaves no room for distinct node ports")
        if self.camera_spacing_m is not None and len(self.cameras) > 1:
            for a, b in zip(self.cameras, self.cameras[1:]):
                if abs((b.position.x - a.position.x) - self.camera_spacing_m) > 1e-6:
                    raise ScenarioError("camera positions contradict camera_spacing_m")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate_hz

    @property
    def frame_period(self) -> float:
        return 1.0 / self.frame_rate_hz

    def mssp_ids(self) -> list[str]:
        return [f"mssp{i + 1}" for i in range(len(self.cameras))]

    def node_addr(self, node_id: str) -> tuple[str, int]:
        if node_id == "veh":
            return (self.host, self.base_port)
        idx = self.mssp_ids().index(node_id)
        return (self.host, self.base_port + idx + 1)

    def plan_hash(self) -> str:
        blob = json.dumps({"waypoints": self.plan.waypoints,
                           "interp_spacing": self.plan.interp_spacing,
                           "lookahead_m": self.plan.lookahead_m},
                          sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def cells(self) -> CellLayout:
        return CellLayout.from_cameras(self.cameras, self.vehicle_dims)

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "seed": self.seed,
            "duration_cap_s": self.duration_cap_s,
            "control_rate_hz": self.control_rate_hz,
            "frame_rate_hz": self.frame_rate_hz,
            "position_source": self.position_source,
            "noise_sigma": self.noise_sigma,
            "camera_spacing_m": self.camera_spacing_m,
            "vehicle": {
                "start": list(self.vehicle_start),
                "dims": list(self.vehicle_dims),
                "tau_v": self.vehicle_params.tau_v,
                "tau_w": self.vehicle_params.tau_w,
                "yaw_rate_limit": self.vehicle_params.yaw_rate_limit,
            },
            "controller": {
                "kp": self.controller.kp,
                "u_max": self.controller.u_max,
                "alpha": self.controller.alpha,
                "v_cruise": self.controller.v_cruise,
            },
            "plan": {
                "waypoints": [list(w) for w in self.plan.waypoints],
                "interp_spacing": self.plan.interp_spacing,
                "lookahead_m": self.plan.lookahead_m,
            },
            "fusion": {
                "staleness_timeout_s": self.staleness_timeout_s,
                "grace_period_s": self.grace_period_s,
            },
            "link": {
                "latency_min_s": self.link.latency_min,
                "latency_max_s": self.link.latency_max,
                "drop_probability": self.link.drop_probability,
            },
            "net": {"host": self.host, "base_port": self.base_port},
            "cameras": [
                {"x": c.position.x, "y": c.position.y, "z": c.position.z,
                 "roll_rad": c.roll, "pitch_rad": c.pitch, "yaw_rad": c.yaw,
                 "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
                 "width": c.width, "height": c.height}
                for c in self.cameras
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScenarioConfig":
        try:
            cameras = [
                CameraModel(position=WorldPoint(c["x"], c["y"], c["z"]),
                            roll=c.get("roll_rad", 0.0), pitch=c["pitch_rad"],
                            yaw=c.get("yaw_rad", 0.0),
                            fx=c["fx"], fy=c["fy"], cx=c["cx"], cy=c["cy"],
                            width=c["width"], height=c["height"])
                for c in obj["cameras"]
            ]
            veh = obj.get("vehicle", {})
            ctrl = obj.get("controller", {})
            plan = obj["plan"]
            fus = obj.get("fusion", {})
            link = obj.get("link", {})
            net = obj.get("net", {})
            return cls(
                name=obj["name"],
                cameras=cameras,
                plan=WaypointPlan(
                    waypoints=tuple(tuple(w) for w in plan["waypoints"]),
                    interp_spacing=plan.get("interp_spacing", 1.0),
                    lookahead_m=plan.get("lookahead_m", 10.0)),
                controller=ControllerParams(
                    kp=ctrl.get("kp", 1.0), u_max=ctrl.get("u_max", 0.5),
                    alpha=ctrl.get("alpha", 0.2),
                    v_cruise=ctrl.get("v_cruise", 3.0)),
                vehicle_params=VehicleParams(
                    tau_v=veh.get("tau_v", 0.5), tau_w=veh.get("tau_w", 0.2),
                    yaw_rate_limit=veh.get("yaw_rate_limit", 1.0)),
                link=LinkConfig(
                    latency_min=link.get("latency_min_s", 0.0015),
                    latency_max=link.get("latency_max_s", 0.0020),
                    drop_probability=link.get("drop_probability", 0.0),
                    seed=obj.get("seed", 0)),
                mode=obj.get("mode", "lockstep"),
                seed=obj.get("seed", 0),
                duration_cap_s=obj.get("duration_cap_s", 90.0),
                control_rate_hz=obj.get("control_rate_hz", 50.0),
                frame_rate_hz=obj.get("frame_rate_hz", 20.0),
                position_source=obj.get("position_source", "cameras"),
                vehicle_start=tuple(veh.get("start", (0.0, 0.0, 0.0))),
                vehicle_dims=tuple(veh.get("dims", (4.5, 2.0))),
                staleness_timeout_s=fus.get("staleness_timeout_s", 0.25),
                grace_period_s=fus.get("grace_period_s", 2.0),
                noise_sigma=obj.get("noise_sigma", 0.0),
                host=net.get("host", "127.0.0.1"),
                base_port=net.get("base_port", 47800),
                camera_spacing_m=obj.get("camera_spacing_m"),
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"bad scenario document: {exc}") from exc


def load_scenario(source: str | Path) -> ScenarioConfig:
    """Load a scenario from a file path or a bundled scenario name."""
    path = Path(source)
    if not path.is_file():
        from importlib import resources
        candidate = resources.files("iea_sim") / "scenarios" / f"{source}.json"
        if not candidate.is_file():
            raise ScenarioError(f"no such scenario file or bundled name: {source}")
        return ScenarioConfig.from_json_obj(json.loads(candidate.read_text()))
    return ScenarioConfig.from_json_obj(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# logging

RowList = list[dict]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_columns(mssp_ids: list[str]) -> list[str]:
    cols = ["t", "true_x", "true_y", "true_psi", "true_v", "fused_x", "fused_y"]
    for mid in mssp_ids:
        cols += [f"{mid}_x", f"{mid}_y"]
    cols += ["yaw_rate_cmd", "v_cmd", "phase"]
    return cols


def write_run_csv(path: Path, rows: RowList, cfg: ScenarioConfig) -> None:
    cols = run_columns(cfg.mssp_ids())
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# schema={SCHEMA_VERSION} name={cfg.name} "
                f"plan={cfg.plan_hash()} mssps={','.join(cfg.mssp_ids())} "
                f"dt={cfg.dt!r} v_cruise={cfg.controller.v_cruise!r}\n")
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join(_fmt(r.get(c)) for c in cols) + "\n")


def write_estimates_csv(path: Path, records: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# schema={SCHEMA_VERSION}\n")
        f.write("mssp_id,seq,t_capture,t_received,x,y\n")
        for rec in records:
            f.write(",".join(_fmt(v) for v in rec) + "\n")


def write_net_csv(path: Path, records: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# schema={SCHEMA_VERSION}\n")
        f.write("t_received,sender,receiver,bytes,latency\n")
        for rec in records:
            f.write(",".join(_fmt(v) for v in rec) + "\n")


def _parse_value(col: str, v: str):
    if v == "":
        return None
    if col in ("phase", "mssp_id", "sender", "receiver"):
        return v
    if col == "seq" or col == "bytes":
        return int(v)
    return float(v)


def read_run_csv(path: Path) -> tuple[dict, list[str], list[dict]]:
    meta: dict = {}
    rows: list[dict] = []
    with open(path, encoding="utf-8") as f:
        first = f.readline().strip()
        if first.startswith("#"):
            for part in first[1:].split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k] = v
            header = f.readline().strip()
        else:
            header = first
        cols = header.split(",")
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            vals = line.split(",")
            rows.append({c: _parse_value(c, v) for c, v in zip(cols, vals)})
    return meta, cols, rows


# ---------------------------------------------------------------------------
# summary statistics

def point_to_polyline(x: float, y: float,
                      waypoints) -> tuple[float, tuple[float, float]]:
    """Min distance from (x, y) to the waypoint polyline and the foot point."""
    best = math.inf
    best_pt = waypoints[0]
    for (x0, y0), (x1, y1) in zip(waypoints, waypoints[1:]):
        dx, dy = x1 - x0, y1 - y0
        L2 = dx * dx + dy * dy
        s = 0.0 if L2 == 0 else max(0.0, min(1.0, ((x - x0) * dx + (y - y0) * dy) / L2))
        px, py = x0 + s * dx, y0 + s * dy
        d = math.hypot(x - px, y - py)
        if d < best:
            best, best_pt = d, (px, py)
    return best, best_pt


def _interp_truth(rows: RowList, t: float) -> Optional[tuple[float, float]]:
    ts = [r["t"] for r in rows]
    if not ts or t < ts[0] or t > ts[-1]:
        return None
    x = float(np.interp(t, ts, [r["true_x"] for r in rows]))
    y = float(np.interp(t, ts, [r["true_y"] for r in rows]))
    return x, y


def summarize(rows: RowList, est_records: list[tuple], net_records: list[tuple],
              cfg: ScenarioConfig, settle_after_s: float = 10.0) -> dict:
    """Run statistics; a pure function of the logged data and the scenario."""
    waypoints = cfg.plan.waypoints
    mssp_ids = cfg.mssp_ids()

    first_fix_t = None
    for r in rows:
        if r["fused_x"] is not None:
            first_fix_t = r["t"]
            break

    cross = [(r["t"], point_to_polyline(r["true_x"], r["true_y"], waypoints)[0])
             for r in rows]
    settle_t = None if first_fix_t is None else first_fix_t + settle_after_s
    settled = [c for t, c in cross if settle_t is not None and t >= settle_t]

    per_mssp = {}
    for mid in mssp_ids:
        errs = []
        for rec in est_records:
            if rec[0] != mid:
                continue
            truth = _interp_truth(rows, rec[2])
            if truth is None:
                continue
            errs.append(math.hypot(rec[4] - truth[0], rec[5] - truth[1]))
        per_mssp[mid] = {
            "n": len(errs),
            "rms_m": math.sqrt(sum(e * e for e in errs) / len(errs)) if errs else None,
            "max_m": max(errs) if errs else None,
        }

    y_end = waypoints[-1][1]
    overshoot = max((r["true_y"] - y_end for r in rows), default=0.0)

    jumps = []
    prev = None
    for r in rows:
        if r["fused_x"] is None:
            prev = None
            continue
        cur = (r["fused_x"], r["fused_y"])
        if prev is not None:
            jumps.append(math.hypot(cur[0] - prev[0], cur[1] - prev[1]))
        prev = cur

    t_stop = None
    stop_reason = None
    for r in rows:
        if r["phase"] == STOPPED:
            t_stop = r["t"]
            stop_reason = "stopped"
            break

    end_t = rows[-1]["t"] if rows else 0.0
    window = max(end_t, 1e-9)
    by_link: dict[str, dict] = {}
    latencies = []
    for t, snd, rcv, nb, lat in net_records:
        latencies.append(lat)
        d = by_link.setdefault(f"{snd}->{rcv}", {"packets": 0, "bytes": 0})
        d["packets"] += 1
        d["bytes"] += nb
    net = {
        "per_link": {
            k: {"packets_per_s": d["packets"] / window,
                "bytes_per_s": d["bytes"] / window}
            for k, d in sorted(by_link.items())
        },
        "latency": latency_percentiles(latencies),
        "latency_min": min(latencies) if latencies else None,
    }

    return {
        "schema": SCHEMA_VERSION,
        "scenario": cfg.name,
        "seed": cfg.seed,
        "mode": cfg.mode,
        "end_t": end_t,
        "first_fix_t": first_fix_t,
        "settle_t": settle_t,
        "t_stop": t_stop,
        "stop_reason": stop_reason,
        "final_speed": rows[-1]["true_v"] if rows else None,
        "cross_track": {
            "rms_after_settle_m":
                math.sqrt(sum(c * c for c in settled) / len(settled))
                if settled else None,
            "max_after_settle_m": max(settled) if settled else None,
            "max_m": max((c for _, c in cross), default=None),
        },
        "per_mssp_error": per_mssp,
        "overshoot_peak_m": overshoot,
        "handover_jump_max_m": max(jumps) if jumps else None,
        "net": net,
    }


# ---------------------------------------------------------------------------
# run execution

@dataclass
class RunResult:
    rows: RowList
    est_records: list[tuple]
    net_records: list[tuple]
    summary: dict
    out_dir: Path
    cfg: ScenarioConfig


def _make_row(t: float, state, fused, live_est: dict, cmd, phase,
              mssp_ids: list[str]) -> dict:
    row = {"t": t, "true_x": state.pose.x, "true_y": state.pose.y,
           "true_psi": state.pose.psi, "true_v": state.v,
           "fused_x": None if fused is None else fused[0],
           "fused_y": None if fused is None else fused[1],
           "yaw_rate_cmd": cmd.yaw_rate_cmd, "v_cmd": cmd.v_cmd, "phase": phase}
    for mid in mssp_ids:
        est = live_est.get(mid)
        row[f"{mid}_x"] = None if est is None else est.x
        row[f"{mid}_y"] = None if est is None else est.y
    return row


def _write_outputs(out_dir: Path, cfg: ScenarioConfig, rows: RowList,
                   est_records: list[tuple], net_records: list[tuple]) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "scenario.json").write_text(
        json.dumps(cfg.to_json_obj(), indent=2) + "\n", encoding="utf-8")
    write_run_csv(out_dir / "run.csv", rows, cfg)
    write_estimates_csv(out_dir / "estimates.csv", est_records)
    write_net_csv(out_dir / "net_metrics.csv", net_records)
    summary = summarize(rows, est_records, net_records, cfg)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary


def run_lockstep(cfg: ScenarioConfig, out_dir: Path,
                 dump_frames: bool = False) -> RunResult:
    dt = cfg.dt
    net = LockstepNetwork(cfg.link)
    mssp_ids = cfg.mssp_ids()
    net.register("veh")
    for mid in mssp_ids:
        net.register(mid)

    dump_dir = out_dir / "frames" if dump_frames else None
    if dump_dir:
        dump_dir.mkdir(parents=True, exist_ok=True)
    mssps = []
    if cfg.position_source == "cameras":
        for mid, cam in zip(mssp_ids, cfg.cameras):
            rng = np.random.default_rng(cfg.seed * 1000 + len(mssps)) \
                if cfg.noise_sigma > 0 else None
            mssps.append(MsspNode(mid, cam, cfg.frame_period, cfg.vehicle_dims,
                                  cfg.noise_sigma, rng, dump_dir))

    x0, y0, psi0 = cfg.vehicle_start
    veh = VehicleNode(
        initial_state=VehicleState(Pose2D(x0, y0, psi0),
                                   v=cfg.controller.v_cruise, yaw_rate=0.0, t=0.0),
        plan=cfg.plan, cparams=cfg.controller, cells=cfg.cells(),
        vparams=cfg.vehicle_params,
        fusion=FusionState(cfg.staleness_timeout_s),
        grace_period=cfg.grace_period_s,
        position_source=cfg.position_source)

    rows: RowList = []
    est_records: list[tuple] = []
    t_stop_seen: Optional[float] = None
    n_steps = int(math.ceil(cfg.duration_cap_s / dt))
    for i in range(n_steps):
        t = i * dt
        for m in mssps:
            for est in m.step(t, net.deliver(m.id, t)):
                net.send(est, "veh", t)
        inbox = net.deliver("veh", t)
        for msg in inbox:
            if isinstance(msg, EstimateMessage):
                est_records.append((msg.mssp_id, msg.seq, msg.t_capture, t,
                                    msg.x, msg.y))
        pre_state = veh.state
        res = veh.step(t, inbox, dt)
        for m in mssps:
            net.send(res.pose_msg, m.id, t + dt)
        rows.append(_make_row(t, pre_state, res.fused, dict(veh.fusion.latest),
                              res.cmd, res.phase, mssp_ids))
        if res.phase == STOPPED and t_stop_seen is None:
            t_stop_seen = t
        if t_stop_seen is not None and (t - t_stop_seen >= STOP_TAIL_S
                                        or veh.state.v < 1e-3):
            break

    net_records = []
    for node_id in ["veh"] + mssp_ids:
        net_records.extend(net.metrics_by_node[node_id].records)
    net_records.sort()
    summary = _write_outputs(out_dir, cfg, rows, est_records, net_records)
    return RunResult(rows, est_records, net_records, summary, out_dir, cfg)


def run_distributed(cfg: ScenarioConfig, out_dir: Path,
                    dump_frames: bool = False) -> RunResult:
    """Spawn one OS process per node, wait, aggregate the vehicle's logs."""
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario_path = out_dir / "scenario.json"
    scenario_path.write_text(json.dumps(cfg.to_json_obj(), indent=2) + "\n",
                             encoding="utf-8")
    # give every spawned interpreter time to finish importing before t=0,
    # otherwise slow hosts start the run with a processing backlog
    epoch = time.time() + 2.0 + 1.0 * (len(cfg.mssp_ids()) + 1)
    procs = []
    try:
        for mid in cfg.mssp_ids():
            args = [sys.executable, "-m", "iea_sim.cli", "node", "--role", "mssp",
                    "--id", mid, "--scenario", str(scenario_path),
                    "--out", str(out_dir), "--epoch", repr(epoch)]
            if dump_frames:
                args.append("--dump-frames")
            procs.append(subprocess.Popen(args))
        veh_args = [sys.executable, "-m", "iea_sim.cli", "node", "--role",
                    "vehicle", "--scenario", str(scenario_path),
                    "--out", str(out_dir), "--epoch", repr(epoch)]
        veh_proc = subprocess.Popen(veh_args)
        rc = veh_proc.wait(timeout=cfg.duration_cap_s + 30.0)
    finally:
        for p in procs:
            p.terminate()
        for p in procs:
            try:
                p.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                p.kill()
    if rc != 0:
        raise RuntimeError(f"vehicle node exited with status {rc}; "
                           f"partial logs in {out_dir}")
    meta, _cols, rows = read_run_csv(out_dir / "run.csv")
    _m2, _c2, est_rows = read_run_csv(out_dir / "estimates.csv")
    _m3, _c3, net_rows = read_run_csv(out_dir / "net_metrics.csv")
    est_records = [(r["mssp_id"], r["seq"], r["t_capture"], r["t_received"],
                    r["x"], r["y"]) for r in est_rows]
    net_records = [(r["t_received"], r["sender"], r["receiver"], r["bytes"],
                    r["latency"]) for r in net_rows]
    summary = json.loads((out_dir / "summary.json").read_text())
    return RunResult(rows, est_records, net_records, summary, out_dir, cfg)


def run_scenario(cfg: ScenarioConfig, out_dir: Path,
                 dump_frames: bool = False) -> RunResult:
    if cfg.mode == "distributed":
        return run_distributed(cfg, out_dir, dump_frames)
    return run_lockstep(cfg, out_dir, dump_frames)


# ---------------------------------------------------------------------------
# distributed node mains (invoked by the CLI in each spawned process)

def mssp_node_main(cfg: ScenarioConfig, node_id: str, out_dir: Path,
                   epoch: float, dump_frames: bool = False) -> int:
    idx = cfg.mssp_ids().index(node_id)
    dump_dir = out_dir / "frames" if dump_frames else None
    if dump_dir:
        dump_dir.mkdir(parents=True, exist_ok=True)
    rng = (np.random.default_rng(cfg.seed * 1000 + idx)
           if cfg.noise_sigma > 0 else None)
    node = MsspNode(node_id, cfg.cameras[idx], cfg.frame_period,
                    cfg.vehicle_dims, cfg.noise_sigma, rng, dump_dir)
    transport = UdpTransport(cfg.node_addr(node_id), epoch)
    veh_addr = cfg.node_addr("veh")
    try:
        while transport.now() < 0:
            time.sleep(0.01)
        while transport.now() < cfg.duration_cap_s + STOP_TAIL_S:
            now = transport.now()
            next_frame = node.frame_clock
            if now < next_frame:
                time.sleep(min(next_frame - now, 0.01))
                continue
            # a camera drops frames when processing stalls: skip any backlog
            # beyond the most recent due frame instead of bursting through it
            behind = now - node.frame_clock
            if behind > node.frame_period:
                node.frame_clock += (int(behind / node.frame_period)
                                     * node.frame_period)
            for est in node.step(transport.now(), transport.drain()):
                # stamp the send time right before the socket write so the
                # logged one-way latency excludes frame-processing time
                transport.send(replace(est, t=transport.now()), veh_addr)
        return 0
    finally:
        transport.close()


def vehicle_node_main(cfg: ScenarioConfig, out_dir: Path, epoch: float) -> int:
    dt = cfg.dt
    mssp_ids = cfg.mssp_ids()
    x0, y0, psi0 = cfg.vehicle_start
    veh = VehicleNode(
        initial_state=VehicleState(Pose2D(x0, y0, psi0),
                                   v=cfg.controller.v_cruise, yaw_rate=0.0, t=0.0),
        plan=cfg.plan, cparams=cfg.controller, cells=cfg.cells(),
        vparams=cfg.vehicle_params,
        fusion=FusionState(cfg.staleness_timeout_s),
        grace_period=cfg.grace_period_s,
        position_source=cfg.position_source)
    transport = UdpTransport(cfg.node_addr("veh"), epoch)
    mssp_addrs = [cfg.node_addr(mid) for mid in mssp_ids]

    rows: RowList = []
    est_records: list[tuple] = []
    t_stop_seen: Optional[float] = None
    step_i = 0
    try:
        while transport.now() < 0:
            time.sleep(0.005)
        while True:
            t_sched = step_i * dt
            now = transport.now()
            if now < t_sched:
                time.sleep(min(t_sched - now, 0.005))
                continue
            if now - t_sched > 10 * dt:
                # processing stall: rejoin the schedule instead of bursting
                # through the missed control steps
                step_i = int(now / dt)
            step_i += 1
            inbox = transport.drain()
            # timestamp after the drain so no drained message postdates t
            t = transport.now()
            for msg in inbox:
                if isinstance(msg, EstimateMessage):
                    est_records.append((msg.mssp_id, msg.seq, msg.t_capture, t,
                                        msg.x, msg.y))
            pre_state = veh.state
            res = veh.step(t, inbox, dt)
            for addr in mssp_addrs:
                transport.send(res.pose_msg, addr)
            rows.append(_make_row(t, pre_state, res.fused,
                                  dict(veh.fusion.latest), res.cmd, res.phase,
                                  mssp_ids))
            if res.phase == STOPPED and t_stop_seen is None:
                t_stop_seen = t
            if t >= cfg.duration_cap_s:
                break
            if t_stop_seen is not None and (t - t_stop_seen >= STOP_TAIL_S
                                            or veh.state.v < 1e-3):
                break
        net_records = [(t, snd, "veh", nb, lat)
                       for t, snd, _rcv, nb, lat in transport.metrics.records]
        _write_outputs(out_dir, cfg, rows, est_records, net_records)
        return 0
    finally:
        transport.close()


# ---------------------------------------------------------------------------
# run comparison and plot-data export

def compare_runs(run_a: Path, run_b: Path,
                 t_max: Optional[float] = None) -> dict:
    """Pointwise trajectory difference between two runs of the same plan."""
    meta_a, _ca, rows_a = read_run_csv(Path(run_a))
    meta_b, _cb, rows_b = read_run_csv(Path(run_b))
    if meta_a.get("plan") != meta_b.get("plan"):
        raise ValueError("runs use different waypoint plans; not comparable")
    if not rows_a or not rows_b:
        raise ValueError("empty run log")
    t0 = max(rows_a[0]["t"], rows_b[0]["t"])
    t1 = min(rows_a[-1]["t"], rows_b[-1]["t"])
    if t_max is not None:
        t1 = min(t1, t_max)
    if t1 <= t0:
        raise ValueError("run logs cover disjoint time ranges")
    tb = [r["t"] for r in rows_b]
    xb = [r["true_x"] for r in rows_b]
    yb = [r["true_y"] for r in rows_b]
    diffs = []
    for r in rows_a:
        if not t0 <= r["t"] <= t1:
            continue
        dx = r["true_x"] - float(np.interp(r["t"], tb, xb))
        dy = r["true_y"] - float(np.interp(r["t"], tb, yb))
        diffs.append(math.hypot(dx, dy))
    return {
        "t_start": t0,
        "t_end": t1,
        "n": len(diffs),
        "max_m": max(diffs),
        "rms_m": math.sqrt(sum(d * d for d in diffs) / len(diffs)),
    }


def export_plot_data(run_csv: Path, out_dir: Path) -> list[Path]:
    """Write plot-ready series: truth vs estimates and the closed-loop path.

    truth_vs_estimates.csv columns:
        t, true_x, true_y, true_psi, <mssp>_x, <mssp>_y ..., fused_x, fused_y
    closed_loop.csv columns:
        t, actual_x, actual_y, desired_x, desired_y, cross_track
    """
    run_csv = Path(run_csv)
    meta, _cols, rows = read_run_csv(run_csv)
    mssp_ids = meta.get("mssps", "").split(",") if meta.get("mssps") else []
    scen_path = run_csv.parent / "scenario.json"
    waypoints = None
    if scen_path.exists():
        plan = json.loads(scen_path.read_text())["plan"]
        waypoints = [tuple(w) for w in plan["waypoints"]]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    est_path = out_dir / "truth_vs_estimates.csv"
    cols = ["t", "true_x", "true_y", "true_psi"]
    for mid in mssp_ids:
        cols += [f"{mid}_x", f"{mid}_y"]
    cols += ["fused_x", "fused_y"]
    with open(est_path, "w", encoding="utf-8") as f:
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join(_fmt(r.get(c)) for c in cols) + "\n")

    cl_path = out_dir / "closed_loop.csv"
    with open(cl_path, "w", encoding="utf-8") as f:
        f.write("t,actual_x,actual_y,desired_x,desired_y,cross_track\n")
        for r in rows:
            if waypoints:
                d, (px, py) = point_to_polyline(r["true_x"], r["true_y"], waypoints)
                f.write(",".join(_fmt(v) for v in
                                 (r["t"], r["true_x"], r["true_y"], px, py, d))
                        + "\n")
            else:
                f.write(",".join(_fmt(v) for v in
                                 (r["t"], r["true_x"], r["true_y"],
                                  None, None, None)) + "\n")
    return [est_path, cl_path]
