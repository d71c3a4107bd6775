#!/usr/bin/env python3
"""Regenerates the bundled hand description files under data/hands/.

Both hands share the same layout idea: a 5-DOF gantry-style arm (x/y/z
translation, yaw, pitch) carrying a circular palm whose fingers hang
downward and curl inward. Link lengths are illustrative placeholders; the
DOF counts match the two supported embodiments (12+5 and 16+5).
"""

import json
import math
import os

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "hands")

# Finger base azimuths in the palm frame (degrees): thumb opposes the rest.
THUMB_AZ = -90.0
FINGER_AZ = {"index": 90.0, "middle": 68.0, "ring": 46.0, "little": 24.0}


def arm_joints():
    return [
        {"name": "arm_x", "type": "prismatic", "parent": "base",
         "origin": {"xyz": [0, 0, 0]}, "axis": [1, 0, 0], "limits": [-0.5, 0.5]},
        {"name": "arm_y", "type": "prismatic", "parent": "arm_x",
         "origin": {"xyz": [0, 0, 0]}, "axis": [0, 1, 0], "limits": [-0.5, 0.5]},
        {"name": "arm_z", "type": "prismatic", "parent": "arm_y",
         "origin": {"xyz": [0, 0, 0]}, "axis": [0, 0, 1], "limits": [0.0, 0.7]},
        {"name": "arm_yaw", "type": "revolute", "parent": "arm_z",
         "origin": {"xyz": [0, 0, 0]}, "axis": [0, 0, 1], "limits": [-3.2, 3.2]},
        {"name": "arm_pitch", "type": "revolute", "parent": "arm_yaw",
         "origin": {"xyz": [0, 0, 0]}, "axis": [0, 1, 0], "limits": [-0.9, 0.9]},
        {"name": "palm", "type": "fixed", "parent": "arm_pitch",
         "origin": {"xyz": [0, 0, 0]}},
    ]


def finger_base(name, azimuth_deg, palm_radius, drop):
    az = math.radians(azimuth_deg)
    return [
        {"name": f"{name}_abd", "type": "revolute", "parent": "palm",
         "origin": {"xyz": [round(palm_radius * math.cos(az), 6),
                            round(palm_radius * math.sin(az), 6), 0.0],
                    "rpy": [0.0, 0.0, round(az, 6)]},
         "axis": [1, 0, 0], "limits": [-0.8, 0.8]},
        {"name": f"{name}_mcp", "type": "revolute", "parent": f"{name}_abd",
         "origin": {"xyz": [0.0, 0.0, -drop]},
         "axis": [0, 1, 0], "limits": [-0.4, 1.9]},
    ]


def thumb_chain(palm_radius):
    az = math.radians(THUMB_AZ)
    return [
        {"name": "thumb_yaw", "type": "revolute", "parent": "palm",
         "origin": {"xyz": [round(palm_radius * math.cos(az), 6),
                            round(palm_radius * math.sin(az), 6), 0.0],
                    "rpy": [0.0, 0.0, round(az, 6)]},
         "axis": [0, 0, 1], "limits": [-1.0, 1.0]},
        {"name": "thumb_abd", "type": "revolute", "parent": "thumb_yaw",
         "origin": {"xyz": [0.0, 0.0, -0.005]},
         "axis": [1, 0, 0], "limits": [-0.8, 0.8]},
        {"name": "thumb_mcp", "type": "revolute", "parent": "thumb_abd",
         "origin": {"xyz": [0.0, 0.0, -0.02]},
         "axis": [0, 1, 0], "limits": [-0.4, 1.9]},
        {"name": "thumb_ip", "type": "revolute", "parent": "thumb_mcp",
         "origin": {"xyz": [0.0, 0.0, -0.03]},
         "axis": [0, 1, 0], "limits": [-0.2, 1.6]},
    ]


def coupling_row(joint_names, minus, plus, ratio):
    row = [0.0] * len(joint_names)
    row[joint_names.index(plus)] = 1.0
    row[joint_names.index(minus)] = -ratio
    return row


def build_dexhand021():
    palm_radius = 0.05
    joints = arm_joints() + thumb_chain(palm_radius)
    for name, az in FINGER_AZ.items():
        joints += finger_base(name, az, palm_radius, drop=0.02)

    fingertips = [
        {"name": "thumb", "link": "thumb_ip", "offset": [0.0, 0.0, -0.03]},
    ] + [
        {"name": name, "link": f"{name}_mcp", "offset": [0.0, 0.0, -0.055]}
        for name in FINGER_AZ
    ]

    moving = [j["name"] for j in joints if j["type"] != "fixed"]
    coupling = {
        "C": [coupling_row(moving, "thumb_mcp", "thumb_ip", 0.6)],
        "d": [0.0],
    }

    spheres = [{"link": "palm", "center": [0.0, 0.0, 0.02], "radius": 0.025},
               {"link": "thumb_ip", "center": [0.0, 0.0, -0.03], "radius": 0.003}]
    spheres += [{"link": f"{name}_mcp", "center": [0.0, 0.0, -0.055], "radius": 0.003}
                for name in FINGER_AZ]

    return {
        "name": "dexhand021",
        "joints": joints,
        "fingertips": fingertips,
        "wrist": {"name": "wrist", "link": "palm", "offset": [0.0, 0.0, 0.0]},
        "coupling": coupling,
        "collision": {"spheres": spheres, "table_z": 0.0},
    }


def build_l20():
    palm_radius = 0.048
    joints = arm_joints() + thumb_chain(palm_radius)
    for name, az in FINGER_AZ.items():
        base = finger_base(name, az, palm_radius, drop=0.018)
        base.append({"name": f"{name}_pip", "type": "revolute", "parent": f"{name}_mcp",
                     "origin": {"xyz": [0.0, 0.0, -0.032]},
                     "axis": [0, 1, 0], "limits": [-0.2, 1.7]})
        joints += base

    fingertips = [
        {"name": "thumb", "link": "thumb_ip", "offset": [0.0, 0.0, -0.03]},
    ] + [
        {"name": name, "link": f"{name}_pip", "offset": [0.0, 0.0, -0.032]}
        for name in FINGER_AZ
    ]

    moving = [j["name"] for j in joints if j["type"] != "fixed"]
    rows = [coupling_row(moving, "thumb_mcp", "thumb_ip", 0.6)]
    rows += [coupling_row(moving, f"{name}_mcp", f"{name}_pip", 0.7) for name in FINGER_AZ]
    coupling = {"C": rows, "d": [0.0] * len(rows)}

    spheres = [{"link": "palm", "center": [0.0, 0.0, 0.02], "radius": 0.024},
               {"link": "thumb_ip", "center": [0.0, 0.0, -0.03], "radius": 0.003}]
    spheres += [{"link": f"{name}_pip", "center": [0.0, 0.0, -0.032], "radius": 0.003}
                for name in FINGER_AZ]

    return {
        "name": "l20",
        "joints": joints,
        "fingertips": fingertips,
        "wrist": {"name": "wrist", "link": "palm", "offset": [0.0, 0.0, 0.0]},
        "coupling": coupling,
        "collision": {"spheres": spheres, "table_z": 0.0},
    }


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    for name, model in [("dexhand021", build_dexhand021()), ("l20", build_l20())]:
        path = os.path.join(OUT_DIR, f"{name}.json")
        with open(path, "w") as f:
            json.dump(model, f, indent=2)
            f.write("\n")
        n_q = sum(1 for j in model["joints"] if j["type"] != "fixed")
        print(f"{path}: n_q={n_q}")


if __name__ == "__main__":
    main()
