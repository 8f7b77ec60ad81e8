import io
import json
import subprocess
import sys

import numpy as np
import pytest

from orthoview.cli import TeachSession, main, read_config_file
from orthoview.cloud_io import (
    RigidScaleTransform,
    apply_transform,
    generate_shape,
    save_cloud,
    save_dataset,
    synthetic_category_dataset,
)
from orthoview.descriptor import DescriptorConfig
from orthoview.protocol import compute_apa, compute_gca, events_from_jsonl, ProtocolConfig


@pytest.fixture(scope="module")
def clouds(tmp_path_factory):
    root = tmp_path_factory.mktemp("clouds")
    box = generate_shape("box", (4, 2, 1), n_points=2000, noise_sigma=0.005, seed=1)
    save_cloud(box, root / "box.pcd")
    save_cloud(generate_shape("sphere", (1.0,), n_points=2000, seed=2), root / "sphere.pcd")
    save_cloud(generate_shape("cylinder", (1, 3), n_points=2000, noise_sigma=0.005, seed=3), root / "can.ply")
    t = RigidScaleTransform.random(np.random.default_rng(4))
    save_cloud(apply_transform(box, t), root / "box_moved.xyz")
    return root, t


def test_feature_writes_vector_and_is_deterministic(clouds, tmp_path, capsys):
    root, _ = clouds
    assert main(["feature", str(root / "box.pcd"), "--out", str(tmp_path / "a"), "--views", "--figure"]) == 0
    assert main(["feature", str(root / "box.pcd"), "--out", str(tmp_path / "b")]) == 0
    text = (tmp_path / "a" / "box.feat").read_text()
    values = [float(v) for v in text.split()]
    assert len(values) == DescriptorConfig().dim == 640
    assert np.linalg.norm(values) == pytest.approx(1.0, abs=1e-12)
    assert text == (tmp_path / "b" / "box.feat").read_text()
    for view in ("front", "top", "right"):
        assert (tmp_path / "a" / f"box.{view}.pgm").read_bytes().startswith(b"P5\n64 64\n")
        assert len((tmp_path / "a" / f"box.{view}.csv").read_text().splitlines()) == 64
    assert (tmp_path / "a" / "box.views.png").read_bytes()[:4] == b"\x89PNG"


def test_feature_options(clouds, tmp_path):
    root, _ = clouds
    assert main(["feature", str(root / "box.pcd"), "--out", str(tmp_path),
                 "--resolution", "32", "--blocks", "4"]) == 0
    assert len((tmp_path / "box.feat").read_text().split()) == 160


def test_feature_degenerate_exits_2(clouds, tmp_path, capsys):
    root, _ = clouds
    assert main(["feature", str(root / "sphere.pcd"), "--out", str(tmp_path)]) == 2
    assert "degenerate reference frame" in capsys.readouterr().err
    assert main(["feature", str(tmp_path / "missing.pcd")]) == 2


def test_bad_blocks_exit_2(clouds, tmp_path):
    root, _ = clouds
    assert main(["feature", str(root / "box.pcd"), "--out", str(tmp_path), "--blocks", "7"]) == 2


@pytest.fixture(scope="module")
def synth_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", str(root / "data"), "--categories", "10", "--instances", "30"]) == 0
    return root / "data"


def test_protocol_three_seeds(synth_dataset, tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text(f"# three seeds\ndataset = {synth_dataset}\nseeds = 1, 2, 3\nout = out\n")
    assert main(["protocol", str(config)]) == 0
    out = tmp_path / "out"
    for seed in (1, 2, 3):
        report = json.loads((out / f"seed_{seed}" / "report.json").read_text())
        assert report["termination"] == "all_learned"
        assert report["learned_categories"] == 10
        events = events_from_jsonl((out / f"seed_{seed}" / "events.jsonl").read_text())
        assert compute_gca(events) == report["gca"]
        assert compute_apa(events, ProtocolConfig.from_dict(report["config"])) == report["apa"]
        assert (out / f"seed_{seed}" / "protocol.png").exists()
    assert len((out / "summary.csv").read_text().splitlines()) == 4
    assert (out / "aggregate.csv").read_text().startswith("metric,mean,std\n")
    assert (out / "summary.png").exists()
    assert capsys.readouterr().out.count("all_learned") == 3


def test_protocol_rerun_is_byte_identical(synth_dataset, tmp_path):
    for name in ("a", "b"):
        assert main(["protocol", "--dataset", str(synth_dataset), "--seed", "7",
                     "--out", str(tmp_path / name), "--no-figures"]) == 0
    a = (tmp_path / "a" / "seed_7" / "events.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "seed_7" / "events.jsonl").read_bytes()
    assert not (tmp_path / "a" / "seed_7" / "protocol.png").exists()


def test_protocol_errors(tmp_path, capsys):
    assert main(["protocol", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2
    assert "does not exist" in capsys.readouterr().err
    assert main(["protocol", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text(f"dataset = {tmp_path}\nwindow_factor = 0\n")
    assert main(["protocol", str(bad)]) == 2
    bad.write_text("colour = blue\n")
    assert main(["protocol", str(bad)]) == 2


def test_read_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\n\nmetric = euclidean  # trailing\nseeds = 1 2\n")
    assert read_config_file(cfg) == {"metric": "euclidean", "seeds": "1 2"}


def test_teach_repl(clouds, tmp_path):
    root, _ = clouds
    snapshot = tmp_path / "memory.json"
    session = TeachSession(DescriptorConfig())
    script = "\n".join([
        f"ask {root / 'box.pcd'}",
        f"teach mug {root / 'box.pcd'}",
        f"ask {root / 'box.pcd'}",
        f"teach cup {root / 'can.ply'}",
        "forget bowl",
        "stats",
        f"save {snapshot}",
        "dance",
        "quit",
        "stats",
    ]) + "\n"
    out = io.StringIO()
    session.run(io.StringIO(script), out)
    lines = out.getvalue().splitlines()
    assert len(lines) == 8
    assert lines[:7] == [
        "unknown",
        "taught mug (1 instance)",
        "mug (distance 0.0000)",
        "taught cup (1 instance)",
        "error: unknown label",
        "2 categories, 2 instances, 1.00 per category (mug:1 cup:1)",
        f"saved {snapshot}",
    ]
    assert lines[7].startswith("error: bad command")
    assert json.loads(snapshot.read_text())["categories"]


def test_grasp_learn_and_query(clouds, tmp_path, capsys):
    root, t = clouds
    store = tmp_path / "store.json"
    pose = ["0.1", "0.2", "0.5", "1", "0", "0", "0"]
    assert main(["grasp", "learn", str(root / "box.pcd"), "--label", "lift", "--pose", *pose,
                 "--store", str(store)]) == 0
    capsys.readouterr()
    assert main(["grasp", "query", str(root / "box.pcd"), "--store", str(store)]) == 0
    fields = capsys.readouterr().out.split()
    assert fields[0] == "lift" and len(fields) == 9
    assert np.allclose([float(v) for v in fields[1:8]], [float(v) for v in pose], atol=1e-6)
    assert float(fields[8]) == pytest.approx(1.0, abs=1e-12)

    assert main(["grasp", "query", str(root / "box_moved.xyz"), "--store", str(store)]) == 0
    fields = capsys.readouterr().out.split()
    assert np.allclose([float(v) for v in fields[1:4]], t.apply_points(np.array([0.1, 0.2, 0.5])), atol=1e-3)

    assert main(["grasp", "query", str(root / "can.ply"), "--store", str(store), "--tau", "0.1"]) == 1
    assert "not familiar" in capsys.readouterr().err
    assert main(["grasp", "learn", str(root / "box.pcd"), "--label", "x",
                 "--pose", "20", "0", "0", "1", "0", "0", "0", "--store", str(store)]) == 2
    assert main(["grasp", "query", str(root / "box.pcd"), "--store", str(tmp_path / "none.json")]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["feature"])
    assert exc.value.code == 2


def test_module_entry_point(clouds, tmp_path):
    root, _ = clouds
    proc = subprocess.run([sys.executable, "-m", "orthoview", "feature", str(root / "sphere.pcd"),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "degenerate reference frame" in proc.stderr


def test_protocol_with_context_schedule(tmp_path):
    data = synthetic_category_dataset(n_categories=3, n_instances=12, n_points=800, seed=4)
    save_dataset({k: v[:6] for k, v in data.items()}, tmp_path / "data" / "kitchen", "xyz")
    save_dataset({k: v[6:] for k, v in data.items()}, tmp_path / "data" / "office", "xyz")
    config = tmp_path / "ctx.cfg"
    config.write_text("dataset = data\nseed = 0\nout = out\nfigures = no\n"
                      "context_schedule = kitchen:0, office:5\n")
    assert main(["protocol", str(config)]) == 0
    report = json.loads((tmp_path / "out" / "seed_0" / "report.json").read_text())
    assert set(report["per_context_gca"]) == {"kitchen", "office"}
    assert report["config"]["context_schedule"] == [["kitchen", 0], ["office", 5]]
    config.write_text("dataset = data\ncontext_schedule = kitchen\n")
    assert main(["protocol", str(config)]) == 2
