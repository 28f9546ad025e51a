import contextlib
import io as _io

import pytest

from lanewise import io as lio
from lanewise.cli import main
from lanewise.config import RunConfig
from lanewise.exceptions import ConfigError


def run_cli(args, capture=True):
    buf = _io.StringIO()
    if capture:
        with contextlib.redirect_stdout(buf):
            rc = main(args)
    else:
        rc = main(args)
    return rc, buf.getvalue()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small corpus driven entirely through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    cfg = RunConfig()
    cfg.set("synth.n_clips", "4")
    cfg.set("synth.frames_per_clip", "8")
    cfg.set("synth.classes", "4:2,5:3")
    cfg.set("synth.seed", "21")
    cfg_path = root / "synth.cfg"
    cfg.write(cfg_path)
    rc, _ = run_cli(["synth", "--out", str(root / "corpus"), "--config", str(cfg_path)])
    assert rc == 0
    rc, _ = run_cli(
        ["calibrate", "--annotations", str(root / "corpus/clip_000/annotations.txt"),
         "--out", str(root / "offsets.txt")]
    )
    assert rc == 0
    split = lio.read_split(root / "corpus/split.csv")
    rc, _ = run_cli(
        ["extract", "--clips", str(root / "corpus"), "--offsets", str(root / "offsets.txt"),
         "--out", str(root / "train.feat"), "--ids", ",".join(split["train"])]
    )
    assert rc == 0
    rc, _ = run_cli(
        ["train", "--model", "svm", "--features", str(root / "train.feat"),
         "--out", str(root / "model.svm")]
    )
    assert rc == 0
    run_cfg = RunConfig()
    run_cfg.set("lanemodel.offsets_file", str(root / "offsets.txt"))
    run_cfg.write(root / "run.cfg")
    return root, split


def test_predict_and_evaluate_flow(workspace):
    root, split = workspace
    clip = split["test"][0]
    rc, out = run_cli(
        ["predict", "--clip", str(root / "corpus" / clip), "--model", str(root / "model.svm"),
         "--smooth", "on", "--refine", "off", "--config", str(root / "run.cfg")]
    )
    assert rc == 0
    lines = out.strip().splitlines()
    assert len(lines) == 8
    for i, line in enumerate(lines):
        cid, idx, t1, t2 = line.split()
        assert cid == clip and int(idx) == i
        assert t1.isdigit() and t2.isdigit()
    (root / "preds.txt").write_text(out)
    rc, report = run_cli(
        ["evaluate", "--pred", str(root / "preds.txt"), "--labels", str(root / "corpus/labels.csv")]
    )
    assert rc == 0
    assert "overall" in report


def test_predict_writes_overlays(workspace):
    root, split = workspace
    clip = split["test"][0]
    overlay_dir = root / "overlays"
    rc, _ = run_cli(
        ["predict", "--clip", str(root / "corpus" / clip), "--model", str(root / "model.svm"),
         "--smooth", "off", "--refine", "off", "--overlay", str(overlay_dir),
         "--config", str(root / "run.cfg")]
    )
    assert rc == 0
    files = sorted(overlay_dir.glob("overlay_*.ppm"))
    assert len(files) == 8
    img = lio.read_ppm(files[0])
    assert img.shape == (264, 352, 3)


def test_train_forest_via_cli(workspace, tmp_path):
    root, _ = workspace
    cfg = RunConfig()
    cfg.set("classifier.trees", "5")
    cfg.set("classifier.max_depth", "6")
    cfg_path = tmp_path / "forest.cfg"
    cfg.write(cfg_path)
    rc, out = run_cli(
        ["train", "--model", "forest", "--features", str(root / "train.feat"),
         "--out", str(tmp_path / "model.forest"), "--config", str(cfg_path)]
    )
    assert rc == 0
    from lanewise.classifier import load_model

    model = load_model(tmp_path / "model.forest")
    assert model.kind == "forest" and len(model.trees_) == 5


def test_cli_error_is_one_line_nonzero(tmp_path, capsys):
    rc = main(["predict", "--clip", str(tmp_path / "nope"), "--model", str(tmp_path / "m")])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("lanewise: error:")
    assert err.strip().count("\n") == 0


def test_cli_rejects_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("preprocess.bogus=1\n")
    rc = main(["synth", "--out", str(tmp_path / "c"), "--config", str(bad)])
    assert rc == 1
    assert "unknown config key" in capsys.readouterr().err


def test_config_parsing_and_validation(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("# comment\npreprocess.radius=6\ndetection.sizes=16,32\npipeline.refine=off\n")
    cfg = RunConfig.from_file(p)
    assert cfg["preprocess.radius"] == 6
    assert cfg["detection.sizes"] == (16, 32)
    assert cfg["pipeline.refine"] is False
    with pytest.raises(ConfigError):
        cfg.set("preprocess.radius", "0")  # out of range
    with pytest.raises(ConfigError):
        cfg.set("smoothing.rate", "abc")
    with pytest.raises(ConfigError):
        cfg.set("no.such.key", "1")
    with pytest.raises(ConfigError):
        RunConfig({"quantum.flux": 3})
    with pytest.raises(ConfigError):
        cfg["pipeline.warp_drive"]


def test_config_write_roundtrip(tmp_path):
    cfg = RunConfig()
    cfg.set("synth.classes", "4:1,5:3")
    cfg.set("smoothing.p", "9")
    p = tmp_path / "rt.cfg"
    cfg.write(p)
    again = RunConfig.from_file(p)
    assert again.values == cfg.values
