import json

import numpy as np
import pytest

from ttfnet.cli import main
from ttfnet.geometry import BoundingBox
from ttfnet.ingest import Scene, read_tensor, scenes_to_coco
from ttfnet.synthetic import standard_scenes


@pytest.fixture
def one_scene(tmp_path):
    scene = Scene.from_boxes(128, 96, [(8, 8, 48, 40), (60, 30, 120, 90)], [0, 2], image_id=5)
    p = tmp_path / "one.json"
    p.write_text(json.dumps(scenes_to_coco([scene], num_classes=3)))
    return p, scene


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_encode_writes_tensors_and_manifest(tmp_path, capsys, one_scene):
    ann, scene = one_scene
    code, _, _ = run(capsys, "encode", "--annotations", ann, "--out", tmp_path / "t", "--classes", 3)
    assert code == 0
    sdir = tmp_path / "t" / "scene_5"
    assert sorted(p.name for p in sdir.iterdir()) == ["heatmap.ttft", "owner.ttft", "reg.ttft", "weights.ttft"]
    manifest = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert manifest["scenes"][0]["grid"] == [24, 32] and manifest["scenes"][0]["num_annotations"] == 2
    cats = json.loads((tmp_path / "t" / "categories.json").read_text())
    assert cats["index_to_category_id"] == [0, 1, 2]
    assert read_tensor(sdir / "heatmap.ttft").shape == (3, 24, 32)


def test_encode_render_writes_pgm(tmp_path, capsys, one_scene):
    ann, _ = one_scene
    run(capsys, "encode", "--annotations", ann, "--out", tmp_path / "t", "--classes", 3, "--render")
    assert (tmp_path / "t" / "scene_5" / "heatmap.pgm").read_bytes().startswith(b"P5\n32 24\n255\n")


def test_encode_center_only_one_cell_per_box(tmp_path, capsys, one_scene):
    ann, _ = one_scene
    run(capsys, "encode", "--annotations", ann, "--out", tmp_path / "t", "--classes", 3, "--subarea", "center-only")
    w = read_tensor(tmp_path / "t" / "scene_5" / "weights.ttft")
    assert np.count_nonzero(w > 0) == 2


def test_encode_class_out_of_range(tmp_path, capsys):
    scene = Scene.from_boxes(64, 64, [(0, 0, 20, 20)], [5])
    p = tmp_path / "a.json"
    p.write_text(json.dumps(scenes_to_coco([scene])))
    code, _, err = run(capsys, "encode", "--annotations", p, "--out", tmp_path / "t", "--classes", 3)
    assert code == 1 and "class id 5" in err


def test_decode_recovers_annotations(tmp_path, capsys, one_scene):
    ann, scene = one_scene
    run(capsys, "encode", "--annotations", ann, "--out", tmp_path / "t", "--classes", 3)
    sdir = tmp_path / "t" / "scene_5"
    code, out, _ = run(capsys, "decode", "--heatmap", sdir / "heatmap.ttft", "--regression", sdir / "reg.ttft")
    dets = json.loads(out)
    assert code == 0
    assert sorted((d["class_id"], tuple(d["box"])) for d in dets) == sorted(
        (a.class_id, a.box.as_tuple()) for a in scene.annotations
    )
    assert all(d["score"] == 1.0 for d in dets)


def test_decode_topk_zero(tmp_path, capsys, one_scene):
    ann, _ = one_scene
    run(capsys, "encode", "--annotations", ann, "--out", tmp_path / "t", "--classes", 3)
    sdir = tmp_path / "t" / "scene_5"
    code, out, _ = run(capsys, "decode", "--heatmap", sdir / "heatmap.ttft", "--regression", sdir / "reg.ttft", "--topk", 0)
    assert code == 0 and json.loads(out) == []


def test_decode_bad_magic_and_shape_mismatch(tmp_path, capsys, one_scene):
    ann, _ = one_scene
    run(capsys, "encode", "--annotations", ann, "--out", tmp_path / "t", "--classes", 3)
    sdir = tmp_path / "t" / "scene_5"
    bad = tmp_path / "bad.ttft"
    bad.write_bytes(b"NOPE" + (sdir / "heatmap.ttft").read_bytes()[4:])
    code, _, err = run(capsys, "decode", "--heatmap", bad, "--regression", sdir / "reg.ttft")
    assert code == 1 and "bad magic" in err
    code, _, err = run(capsys, "decode", "--heatmap", sdir / "heatmap.ttft", "--regression", sdir / "weights.ttft")
    assert code == 1


def test_decode_clamps_to_image_size(tmp_path, capsys):
    from ttfnet.ingest import write_tensor

    heat = np.zeros((1, 4, 4), dtype=np.float32)
    heat[0, 1, 1] = 1.0
    write_tensor(heat, tmp_path / "h.ttft")
    write_tensor(np.full((4, 4, 4), 10.0), tmp_path / "r.ttft")
    _, out, _ = run(capsys, "decode", "--heatmap", tmp_path / "h.ttft", "--regression", tmp_path / "r.ttft")
    assert json.loads(out)[0]["box"] == [0.0, 0.0, 16.0, 16.0]
    _, out, _ = run(
        capsys, "decode", "--heatmap", tmp_path / "h.ttft", "--regression", tmp_path / "r.ttft", "--image-size", "100,50"
    )
    assert json.loads(out)[0]["box"] == [0.0, 0.0, 100.0, 50.0]


def test_gradcheck_passes_and_repeats(capsys):
    code, out1, _ = run(capsys, "gradcheck", "--seed", 0, "--trials", 10)
    _, out2, _ = run(capsys, "gradcheck", "--seed", 0, "--trials", 10)
    assert code == 0 and out1 == out2
    errs = [float(line.split(":")[1]) for line in out1.splitlines()[:2]]
    assert all(e < 1e-4 for e in errs)


def test_gradcheck_zero_trials_is_usage_error(capsys):
    assert run(capsys, "gradcheck", "--trials", 0)[0] == 1


def test_roundtrip_standard_set(tmp_path, capsys):
    p = tmp_path / "std.json"
    p.write_text(json.dumps(scenes_to_coco(standard_scenes(0), num_classes=3)))
    code, out, _ = run(capsys, "roundtrip", "--annotations", p, "--classes", 3)
    assert code == 0 and out.splitlines()[-1].startswith("8 scenes, 0 with collisions")


def test_roundtrip_flags_shared_center(tmp_path, capsys):
    boxes = [BoundingBox(10, 10, 50, 50), BoundingBox(20, 20, 40, 40)]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(scenes_to_coco([Scene.from_boxes(64, 64, boxes, [1, 1], image_id=1)])))
    code, out, _ = run(capsys, "roundtrip", "--annotations", p, "--classes", 3)
    assert code == 0 and "collisions excluded: 0,1" in out


def test_roundtrip_empty_file(tmp_path, capsys):
    p = tmp_path / "e.json"
    p.write_text("")
    code, out, _ = run(capsys, "roundtrip", "--annotations", p)
    assert code == 0 and out.startswith("0 scenes")


def test_lr_sweep_detector_grid_shape(capsys):
    code, out, _ = run(capsys, "lr-sweep", "--betas", "0.01,0.1,0.3,0.54", "--lrs", "0.006,0.012,0.018", "--steps", 5)
    lines = out.splitlines()
    assert lines[0] == "beta,eta,final_loss,diverged" and len(lines) == 1 + 12 + 1
    assert lines[-1].startswith("max stable lr per beta:")
    assert code == 0


def test_lr_sweep_single_cell_and_zero_steps(capsys, tmp_path):
    code, out, _ = run(capsys, "lr-sweep", "--betas", "0.54", "--lrs", "0.5", "--steps", 0)
    assert code == 0 and len(out.splitlines()) == 3 and "(non-decreasing)" in out
    from ttfnet.encoder import EncoderConfig
    from ttfnet.trainer import run_training

    initial = run_training(standard_scenes(0), EncoderConfig(num_classes=3), 0.5, 0).initial_loss
    assert float(out.splitlines()[1].split(",")[2]) == pytest.approx(initial, rel=1e-9)


def test_lr_sweep_malformed_list(capsys):
    assert run(capsys, "lr-sweep", "--betas", "0.1,,x", "--lrs", "1")[0] == 1
    assert run(capsys, "lr-sweep", "--lrs", "1")[0] == 1


def test_config_precedence(tmp_path, capsys, one_scene):
    ann, _ = one_scene
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"annotations": str(ann), "out": str(tmp_path / "t"), "classes": 3, "subarea": "center-only"}))
    run(capsys, "--config", cfg, "encode")
    manifest = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert manifest["config"]["subarea"] == "center-only" and manifest["config"]["beta"] == 0.54
    run(capsys, "--config", cfg, "encode", "--subarea", "rectangle")
    manifest = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert manifest["config"]["subarea"] == "rectangle"


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    code, _, err = run(capsys, "--config", cfg, "gradcheck")
    assert code == 1 and "colour" in err


def test_unknown_command_is_usage_error(capsys):
    assert main(["train"]) == 1
    assert main(["--help"]) == 0
