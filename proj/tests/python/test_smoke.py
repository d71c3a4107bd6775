import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

MODULE_DIR = os.environ.get("FSAG_MODULE_DIR")
if MODULE_DIR:
    sys.path.insert(0, MODULE_DIR)

fsag = pytest.importorskip("_fsag")


def test_labels_closed_forms():
    stack = fsag.synthesize_labels([(0, 100.0, 200.0)], 320, 640)
    assert stack.shape == (5, 320, 640)
    assert stack[0, 100, 200] == pytest.approx(1.0)
    assert fsag.label_sigma(320, 640) == 5.0
    assert stack[0, 105, 200] == pytest.approx(math.exp(-0.5), abs=1e-5)
    assert stack[1].max() == 0.0


def test_metrics_closed_forms():
    g = np.array([[0.5, 0.5]])
    p = np.array([[0.9, 0.1]])
    assert fsag.sim(p, g) == pytest.approx(0.6)
    assert fsag.kld(g, g) == pytest.approx(0.0, abs=1e-9)
    expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    assert fsag.kld(p, g) == pytest.approx(expected, abs=1e-6)

    hot = np.zeros((3, 3))
    hot[1, 1] = 1.0
    assert fsag.nss(hot, 1.0, 1.0) == pytest.approx(math.sqrt(8.0))


def test_back_projection_round_trip():
    intrinsics = {"fx": 380.0, "fy": 380.0, "cx": 320.0, "cy": 160.0,
                  "width": 640, "height": 320}
    depth = np.zeros((320, 640), dtype=np.float32)
    mask = np.zeros((320, 640), dtype=np.float32)
    depth[160, 320] = 0.5
    mask[160, 320] = 1.0
    depth[100, 400] = 0.8
    mask[100, 400] = 1.0
    cloud = fsag.back_project(depth, mask, intrinsics)
    assert cloud.shape == (2, 3)
    pixels = fsag.project(cloud, intrinsics)
    assert np.allclose(pixels, [[100, 400], [160, 320]], atol=1e-6)


def test_qp_closed_forms():
    n = 3
    b = np.array([0.3, -1.2, 2.0])
    sol = fsag.qp_solve(np.eye(n), -b, np.zeros((0, n)), np.zeros(0), np.zeros(0))
    assert sol["status"] == "solved"
    assert np.allclose(sol["x"], b, atol=1e-6)

    sol = fsag.qp_solve(np.eye(1), np.array([-2.0]), np.eye(1),
                        np.array([-np.inf]), np.array([1.0]))
    assert sol["status"] == "solved"
    assert sol["x"][0] == pytest.approx(1.0, abs=1e-6)
    assert sol["y"][0] == pytest.approx(1.0, abs=1e-5)


def test_forward_kinematics():
    model = {
        "name": "planar2",
        "joints": [
            {"name": "j1", "type": "revolute", "parent": "base",
             "axis": [0, 0, 1], "limits": [-3.2, 3.2]},
            {"name": "j2", "type": "revolute", "parent": "j1",
             "origin": {"xyz": [1, 0, 0]}, "axis": [0, 0, 1], "limits": [-3.2, 3.2]},
        ],
        "fingertips": [{"name": "tip", "link": "j2", "offset": [1, 0, 0]}],
    }
    tips = fsag.fingertips(json.dumps(model), np.zeros(2))
    assert np.allclose(tips, [[2.0, 0.0, 0.0]], atol=1e-12)
    tips = fsag.fingertips(json.dumps(model), np.array([math.pi / 2, 0.0]))
    assert np.allclose(tips, [[0.0, 2.0, 0.0]], atol=1e-9)


def test_peaks_and_noise():
    stack = fsag.synthesize_labels([(2, 30.0, 40.0)], 64, 64)
    peaks = fsag.extract_peaks(stack, 0.1)
    assert len(peaks) == 1
    assert peaks[0]["finger"] == 2
    assert abs(peaks[0]["row"] - 30.0) <= 0.5

    z0 = np.zeros((4, 4), dtype=np.float32)
    eps = np.ones((4, 4), dtype=np.float32)
    zt = fsag.forward_noise(z0, 500, eps)
    assert zt.shape == (4, 4)
    assert 0.0 < zt[0, 0] < 1.0


def test_cli_help():
    cli = os.environ.get("FSAG_CLI")
    if not cli:
        pytest.skip("FSAG_CLI not set")
    out = subprocess.run([cli, "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "pipeline" in out.stdout
