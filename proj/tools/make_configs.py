#!/usr/bin/env python3
"""Writes the shipped workcell configs and their calibration files.

Camera extrinsics are camera-to-world poses aimed at the spawn-region
center (optical axis +z, image x right, image y down).
"""
import json
import math
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

ROOT = Path(__file__).resolve().parent.parent / "configs"
PI = math.pi


def look_at(eye, target):
    z = np.asarray(target, float) - np.asarray(eye, float)
    z /= np.linalg.norm(z)
    x = np.cross(z, [0.0, 0.0, 1.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    x_, y_, z_, w_ = Rotation.from_matrix(np.column_stack([x, y, z])).as_quat()
    q = np.array([w_, x_, y_, z_])
    q /= np.linalg.norm(q)
    return {"position": [round(float(v), 6) for v in eye], "orientation": [float(v) for v in q]}


def ring(target, distance, elevation_deg, azimuths_deg):
    el = math.radians(elevation_deg)
    out = []
    for az in azimuths_deg:
        a = math.radians(az)
        eye = [
            target[0] + distance * math.cos(el) * math.cos(a),
            target[1] + distance * math.cos(el) * math.sin(a),
            target[2] + distance * math.sin(el),
        ]
        out.append(look_at(eye, target))
    return out


def cameras(prefix, target, azimuths, intr, clocks, distance=0.6, elevation=55.0):
    cams, calib = [], {}
    for i, pose in enumerate(ring(target, distance, elevation, azimuths)):
        cid = f"{prefix}{i}"
        cams.append({
            "id": cid,
            "type": "sim_rgbd",
            "role": "master" if i == 0 else "subordinate",
            "delay_us": 160.0 * i,
            "intrinsics": intr,
            "extrinsic": pose,
            "fps": 30.0,
            "clock": clocks[i],
        })
        calib[cid] = {"intrinsics": intr, "extrinsic": pose}
    return cams, {"cameras": calib}


def arm(dh, base_y, qd_max, qdd_max):
    return {
        "dh": [{"a": a, "alpha": al, "d": d, "theta_offset": 0.0} for a, al, d in dh],
        "limits": {
            "q_min": [-2 * PI] * 6,
            "q_max": [2 * PI] * 6,
            "qd_max": qd_max,
            "qdd_max": qdd_max,
        },
        "base_pose": {"position": [0.0, base_y, 0.0], "orientation": [0.0, 0.0, 0.0, 1.0]},
    }


HOME = [0.0, -PI / 2, PI / 2, -PI / 2, -PI / 2, 0.0]
INTR = {"fx": 300.0, "fy": 300.0, "cx": 79.5, "cy": 59.5, "width": 160, "height": 120}
SCENE_COMMON = {
    "table_height": 0.0,
    "block_half_extents": [0.02, 0.02, 0.02],
    "success_lift": 0.04,
    "collision_margin": 0.005,
    "grasp": {"radius": 0.04, "close_threshold": 0.4, "offset": [0.0, 0.0, -0.02]},
}


def ur5():
    dh = [(0.0, PI / 2, 0.089159), (-0.425, 0.0, 0.0), (-0.39225, 0.0, 0.0),
          (0.0, PI / 2, 0.10915), (0.0, -PI / 2, 0.09465), (0.0, 0.0, 0.0823)]
    region = {"x_min": 0.42, "x_max": 0.54, "y_min": 0.05, "y_max": 0.17}
    target = [0.48, 0.11, 0.02]
    clocks = [
        {"offset_s": 0.0, "drift_ppm": 0.0, "jitter_sigma_us": 50.0},
        {"offset_s": 0.0121, "drift_ppm": 18.0, "jitter_sigma_us": 50.0},
        {"offset_s": -0.0043, "drift_ppm": -11.0, "jitter_sigma_us": 50.0},
        {"offset_s": 0.0307, "drift_ppm": 25.0, "jitter_sigma_us": 50.0},
    ]
    cams, calib = cameras("kinect", target, [30, 120, 210, 300], INTR, clocks)
    cfg = {
        "$schema": "../docs/workcell.schema.json",
        "name": "ur5_kinect4",
        "robot": {
            "type": "ur5_sim",
            "dof": 6,
            "arms": [arm(dh, 0.0, [PI] * 6, [15.0] * 6)],
            "home": HOME,
            "port": 30004,
            "control_rate_hz": 125.0,
            "state_rate_hz": 125.0,
            "action_space": "joint_velocity",
            "dls_lambda": 0.05,
            "watchdog_timeout_s": 0.1,
        },
        "cameras": cams,
        "calibration_path": "calib/ur5_kinect4.calib.json",
        "scene": dict(SCENE_COMMON, spawn_region=region),
        "input": {"v_max": 0.15, "w_max": 0.6, "deadzone": 0.05},
        "recorder": {"camera_queue": 64, "frameset_queue": 64, "align_mode": "sequence",
                     "episode_duration_s": 15.0, "output_dir": "data/ur5_kinect4"},
    }
    return cfg, calib


def bimanual():
    dh = [(0.0, PI / 2, 0.127), (-0.30, 0.0, 0.0), (-0.28, 0.0, 0.0),
          (0.0, PI / 2, 0.07), (0.0, -PI / 2, 0.065), (0.0, 0.0, 0.09)]
    sign = [-1.0, 1.0, 1.0, 1.0, -1.0, -1.0]
    offset = [h - s * h for h, s in zip(HOME, sign)]
    region = {"x_min": 0.30, "x_max": 0.40, "y_min": 0.22, "y_max": 0.32}
    target = [0.35, 0.27, 0.02]
    clocks = [
        {"offset_s": 0.0, "drift_ppm": 0.0, "jitter_sigma_us": 80.0},
        {"offset_s": 0.0082, "drift_ppm": -14.0, "jitter_sigma_us": 80.0},
        {"offset_s": 0.0195, "drift_ppm": 9.0, "jitter_sigma_us": 80.0},
    ]
    cams, calib = cameras("realsense", target, [0, 120, 240], INTR, clocks, distance=0.5, elevation=60.0)
    cfg = {
        "$schema": "../docs/workcell.schema.json",
        "name": "bimanual_rs3",
        "robot": {
            "type": "bimanual_sim",
            "dof": 12,
            "arms": [arm(dh, 0.2, [PI] * 6, [15.0] * 6), arm(dh, -0.2, [PI] * 6, [15.0] * 6)],
            "home": HOME + HOME,
            "port": 30005,
            "control_rate_hz": 125.0,
            "state_rate_hz": 125.0,
            "action_space": "ee_twist",
            "follower_map": {"sign": sign, "offset": offset, "kp": 10.0},
            "active_arm": 0,
            "dls_lambda": 0.05,
            "watchdog_timeout_s": 0.1,
        },
        "cameras": cams,
        "calibration_path": "calib/bimanual_rs3.calib.json",
        "scene": dict(SCENE_COMMON, spawn_region=region),
        "input": {"v_max": 0.12, "w_max": 0.5, "deadzone": 0.05},
        "recorder": {"camera_queue": 64, "frameset_queue": 64, "align_mode": "sequence",
                     "episode_duration_s": 15.0, "output_dir": "data/bimanual_rs3"},
    }
    return cfg, calib


def main():
    for cfg, calib in (ur5(), bimanual()):
        (ROOT / "calib").mkdir(parents=True, exist_ok=True)
        (ROOT / f"{cfg['name']}.json").write_text(json.dumps(cfg, indent=2) + "\n")
        (ROOT / "calib" / f"{cfg['name']}.calib.json").write_text(json.dumps(calib, indent=2) + "\n")


if __name__ == "__main__":
    main()
