import json
from pathlib import Path

import numpy as np
import pytest

from nerfsearch.cli import main
from nerfsearch.data import save_descriptor, spec_to_dict
from nerfsearch.field import ArchitectureDescriptor, CellConfig
from nerfsearch.metrics import read_metrics_csv


def tiny_spec_file(tmp_path, seed=0):
    from nerfsearch.data import ProceduralSceneSpec, Sphere
    spec = ProceduralSceneSpec(
        spheres=[Sphere((0.4, 0.0, 0.0), 0.4, (0.9, 0.2, 0.2), 8.0),
                 Sphere((-0.4, 0.1, 0.1), 0.35, (0.2, 0.4, 0.9), 10.0)],
        image_size=(16, 16), n_train=5, n_eval=2, seed=seed)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec_to_dict(spec)))
    return path


def descriptor_file(tmp_path, name="xxs.json"):
    desc = ArchitectureDescriptor(coarse=CellConfig((1, 1, 1), (8, 8, 8)),
                                  fine=CellConfig((2, 1, 1), (10, 12, 14)))
    path = tmp_path / name
    save_descriptor(path, desc)
    return path


@pytest.fixture
def scene_dir(tmp_path):
    spec = tiny_spec_file(tmp_path)
    out = tmp_path / "scene"
    assert main(["scene-gen", "--out", str(out), "--spec", str(spec)]) == 0
    return out


def test_scene_gen_default_layout(tmp_path):
    out = tmp_path / "scene"
    assert main(["scene-gen", "--out", str(out), "--seed", "1"]) == 0
    pngs = list(out.glob("*/*.png"))
    assert len(pngs) == 25
    assert (out / "transforms_train.json").exists()
    assert (out / "transforms_test.json").exists()
    assert (out / "run_config.json").exists()


def test_scene_gen_deterministic(tmp_path):
    spec = tiny_spec_file(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["scene-gen", "--out", str(out1), "--spec", str(spec)])
    main(["scene-gen", "--out", str(out2), "--spec", str(spec)])
    for p1 in sorted(out1.glob("*/*.png")):
        p2 = out2 / p1.relative_to(out1)
        assert p1.read_bytes() == p2.read_bytes()


def test_scene_gen_invalid_spec_no_partial_output(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"spheres": [
        {"center": [9, 0, 0], "radius": 0.5, "rgb": [1, 0, 0], "density": 1.0}
    ]}))
    out = tmp_path / "scene_bad"
    rc = main(["scene-gen", "--out", str(out), "--spec", str(bad)])
    assert rc != 0
    assert not out.exists()


def test_missing_scene_is_usage_error(tmp_path):
    desc = descriptor_file(tmp_path)
    rc = main(["train", "--scene", str(tmp_path / "nope"),
               "--descriptor", str(desc), "--iterations", "1"])
    assert rc == 1


def test_malformed_descriptor_is_usage_error(tmp_path, scene_dir):
    bad = tmp_path / "bad_desc.json"
    bad.write_text("{broken")
    rc = main(["train", "--scene", str(scene_dir), "--descriptor", str(bad),
               "--iterations", "1"])
    assert rc == 1


def test_train_zero_iterations_then_eval(tmp_path, scene_dir):
    desc = descriptor_file(tmp_path)
    ckpt = tmp_path / "run.nfck"
    csv = tmp_path / "metrics.csv"
    rc = main(["train", "--scene", str(scene_dir), "--descriptor", str(desc),
               "--iterations", "0", "--out", str(ckpt), "--rays", "32",
               "--nc", "8", "--nf", "8", "--eval-images", "1",
               "--metrics-csv", str(csv)])
    assert rc == 0
    assert ckpt.exists()
    rows = read_metrics_csv(csv)
    assert len(rows) == 1
    assert rows[0]["lpips"] == ""  # named placeholder column stays empty
    assert float(rows[0]["ssim"]) <= 1.0

    rc = main(["eval", "--scene", str(scene_dir), "--checkpoint", str(ckpt),
               "--nc", "8", "--nf", "8", "--eval-images", "1",
               "--metrics-csv", str(csv)])
    assert rc == 0
    assert len(read_metrics_csv(csv)) == 2


def test_train_auto_iterations_logged(tmp_path, scene_dir, capsys):
    from nerfsearch.cost import er_params
    from nerfsearch.data import load_descriptor
    from nerfsearch.search import scaled_iterations
    desc = descriptor_file(tmp_path)
    rc = main(["train", "--scene", str(scene_dir), "--descriptor", str(desc),
               "--iterations", "auto", "--auto-baseline-iters", "100",
               "--auto-floor", "2", "--rays", "16", "--nc", "8", "--nf", "8",
               "--eval-images", "1", "--out", str(tmp_path / "auto.nfck")])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "auto iterations:" in captured
    want = scaled_iterations(er_params(load_descriptor(desc)),
                             baseline_iters=100, floor=2)
    assert f"auto iterations: {want}" in captured


def test_cost_json_contract(tmp_path, capsys):
    desc = descriptor_file(tmp_path)
    rc = main(["cost", "--descriptor", str(desc)])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) == {"params", "params_M", "flops", "flops_G",
                            "er_params", "er_flops"}
    assert payload["params"] > 0
    assert payload["er_params"] > 1


def test_cost_csv_append(tmp_path):
    desc = descriptor_file(tmp_path)
    csv = tmp_path / "sweep.csv"
    for _ in range(2):
        assert main(["cost", "--descriptor", str(desc), "--csv", str(csv)]) == 0
    lines = csv.read_text().strip().splitlines()
    assert len(lines) == 3  # header + 2 rows


def test_config_file_fills_defaults(tmp_path, scene_dir):
    desc = descriptor_file(tmp_path)
    cfg = tmp_path / "cfg.conf"
    cfg.write_text("rays = 16\nnc = 4\nnf = 4\neval_images = 1\n")
    ckpt = tmp_path / "cfg.nfck"
    rc = main(["train", "--scene", str(scene_dir), "--descriptor", str(desc),
               "--iterations", "2", "--out", str(ckpt), "--config", str(cfg)])
    assert rc == 0
    run = json.loads(Path(str(ckpt) + ".run.json").read_text())
    assert run["args"]["rays"] == 16


def test_report_single_row_and_svg(tmp_path):
    csv = tmp_path / "m.csv"
    csv.write_text(
        "scene,architecture,psnr,ssim,lpips,params_M,flops_G,fps\n"
        "toy,toy_xxs,25.0,0.9,,0.05,28.01,12.5\n")
    out = tmp_path / "report.csv"
    svg = tmp_path / "report.svg"
    rc = main(["report", str(csv), "--out", str(out), "--svg", str(svg)])
    assert rc == 0
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 2
    assert svg.exists() and b"<svg" in svg.read_bytes()


def test_report_sorted_and_skips_malformed(tmp_path, capsys):
    csv = tmp_path / "m.csv"
    csv.write_text(
        "scene,architecture,psnr,ssim,lpips,params_M,flops_G,fps\n"
        "toy,big,25.0,0.95,,0.39,262.61,\n"
        "toy,broken,25.0,not_a_number,,0.05,28.01,\n"
        "toy,small,22.0,0.88,,0.05,28.01,\n")
    out = tmp_path / "report.csv"
    rc = main(["report", str(csv), "--out", str(out)])
    assert rc == 0
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 3  # header + 2 good rows
    ers = [float(line.split(",")[1]) for line in rows[1:]]
    assert ers == sorted(ers)


def test_report_reproduces_reference_ratio_range(tmp_path):
    # feeding the reference family's flops values reproduces the published
    # efficiency-ratio spread on the x axis
    csv = tmp_path / "m.csv"
    lines = ["scene,architecture,psnr,ssim,lpips,params_M,flops_G,fps"]
    for flops_g in (237.57, 137.17, 48.56, 28.01, 25.98):
        lines.append(f"toy,a{flops_g},30.0,0.9,,0.1,{flops_g},")
    csv.write_text("\n".join(lines) + "\n")
    out = tmp_path / "report.csv"
    assert main(["report", str(csv), "--out", str(out)]) == 0
    ers = [float(line.split(",")[1])
           for line in out.read_text().strip().splitlines()[1:]]
    assert abs(ers[0] - 2.42) / 2.42 < 0.02
    assert abs(ers[-1] - 22.10) / 22.10 < 0.02


def test_usage_error_exit_code():
    assert main(["train"]) == 1  # missing required flags
    assert main(["cost"]) == 1
