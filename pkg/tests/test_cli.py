import hashlib
import json

import numpy as np
import pytest

from deskdiff.cli import main
from deskdiff.conditioning import CondBatch
from deskdiff.config import load_config
from deskdiff.experiment import build_datasets, load_run
from deskdiff.io import read_pgm, read_samples_csv, write_samples_csv
from deskdiff.netgraph.checkpoint import load_checkpoint
from deskdiff.netgraph.denoiser import DenoiserModel
from deskdiff.rng import stream
from deskdiff.sampling import SamplerConfig, ancestral_sample

TINY = """\
[schedule]
T = 8
beta_start = 1e-3
beta_end = 0.2

[model]
hidden_widths = 8, 8
time_embed_dim = 4
cond_embed_dim = 3
cond_dim = 4

[conditioning]
n_classes = 8
class_names = e, ne, n, nw, w, sw, s, se

[train]
total_steps = {steps}
batch_size = 16
seed = 0

[data]
generator = {generator}
n = 200
heldout_n = 100

[paths]
checkpoint_dir = ckpt
output_dir = out
"""

SPRITES = TINY.replace("n_classes = 8\nclass_names = e, ne, n, nw, w, sw, s, se",
                       "n_classes = 3\nn_styles = 3\nclass_names = square, cross, disk")


def write_config(tmp_path, steps=3, generator="ring", text=TINY):
    path = tmp_path / "run.ini"
    path.write_text(text.format(steps=steps, generator=generator))
    return path


def train(tmp_path, **kw):
    cfg = write_config(tmp_path, **kw)
    assert main(["train", "--config", str(cfg)]) == 0
    return cfg, tmp_path / "ckpt" / "denoiser.ckpt"


def test_missing_config_exits_one(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.ini")]) == 1
    assert "not found" in capsys.readouterr().err


def test_bad_config_key_exits_one(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nwidth = 3\n")
    assert main(["gradcheck", "--config", str(path)]) == 1


def test_usage_error_exits_one():
    with pytest.raises(SystemExit) as exc:
        main(["sample"])
    assert exc.value.code == 1


def test_zero_step_checkpoint_equals_initialisation(tmp_path):
    cfg_path, ckpt = train(tmp_path, steps=0)
    cfg = load_config(cfg_path)
    init = DenoiserModel.init(cfg.denoiser_config(), stream(cfg.train.seed, "init"))
    _, _, arrays = load_checkpoint(ckpt)
    for k, v in init.arrays().items():
        assert arrays[k].tobytes() == v.tobytes()


def test_training_twice_gives_identical_checkpoint(tmp_path):
    _, ckpt = train(tmp_path)
    first = hashlib.sha256(ckpt.read_bytes()).hexdigest()
    assert (tmp_path / "out" / "loss.csv").read_text().startswith("step,loss")
    train(tmp_path)
    assert hashlib.sha256(ckpt.read_bytes()).hexdigest() == first


def test_sample_outputs(tmp_path, capsys):
    _, ckpt = train(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sample", "--checkpoint", str(ckpt), "--n", "25", "--class", "nw", "--out", str(a)]) == 0
    assert main(["sample", "--checkpoint", str(ckpt), "--n", "25", "--class", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    samples, classes = read_samples_csv(a)
    assert samples.shape == (25, 2) and (classes == 3).all()
    assert a.read_text().splitlines()[0] == "x,y,class"

    empty = tmp_path / "empty.csv"
    assert main(["sample", "--checkpoint", str(ckpt), "--n", "0", "--out", str(empty)]) == 0
    assert empty.read_text().strip() == "x,y"

    assert main(["sample", "--checkpoint", str(ckpt), "--n", "3", "--class", "zz", "--out", str(a)]) == 1
    assert main(["sample", "--checkpoint", str(ckpt), "--n", "3", "--class", "8", "--out", str(a)]) == 1
    assert main(["sample", "--checkpoint", str(tmp_path / "none.ckpt"), "--out", str(a)]) == 1


def test_unit_guidance_matches_library_conditional_path(tmp_path):
    _, ckpt = train(tmp_path)
    out = tmp_path / "g1.csv"
    assert main(["sample", "--checkpoint", str(ckpt), "--n", "10", "--seed", "4", "--class", "2",
                 "--guidance", "1", "--out", str(out)]) == 0
    run = load_run(ckpt)
    res = ancestral_sample(run.model, run.config.build_schedule(), CondBatch.make(10, 2),
                           SamplerConfig(guidance_scale=1.0, n_samples=10), stream(4, "sample"))
    got, _ = read_samples_csv(out)
    np.testing.assert_array_equal(got, res.samples)


def test_trajectory_file(tmp_path):
    _, ckpt = train(tmp_path)
    out = tmp_path / "s.csv"
    assert main(["sample", "--checkpoint", str(ckpt), "--n", "4", "--record-trajectory", "--out", str(out)]) == 0
    lines = (tmp_path / "s_trajectory.csv").read_text().splitlines()
    assert lines[0] == "step,sample,x,y"
    assert len(lines) == 1 + 9 * 4
    assert lines[1].startswith("8,0,") and lines[-1].startswith("0,3,")


def test_eval_reports_json(tmp_path, capsys):
    cfg_path, _ = train(tmp_path)
    cfg = load_config(cfg_path)
    ref = build_datasets(cfg).heldout
    path = tmp_path / "ref.csv"
    write_samples_csv(path, ref.samples[:50], ref.class_ids[:50])
    capsys.readouterr()
    assert main(["eval", "--samples", str(path), "--config", str(cfg_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["coverage"] <= 8 and report["n_modes"] == 8
    assert report["purity"] == 1.0
    assert {"mmd", "mmd_threshold", "bandwidth", "moments"} <= set(report)
    assert main(["eval", "--samples", str(tmp_path / "x.csv"), "--config", str(cfg_path)]) == 1


def test_sprite_pgm_output(tmp_path):
    _, ckpt = train(tmp_path, generator="sprites", text=SPRITES)
    out = tmp_path / "grid.pgm"
    assert main(["sample", "--checkpoint", str(ckpt), "--n", "6", "--class", "disk", "--out", str(out)]) == 0
    img = read_pgm(out)
    assert img.ndim == 2 and img.min() >= 0
    assert out.read_text().startswith("P2")


def test_gradcheck_command(config_dir, capsys):
    assert main(["gradcheck", "--config", str(config_dir / "gradcheck.ini")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "group,max_rel_error,status"
    groups = [l.split(",")[0] for l in lines[1:] if not l.startswith("#")]
    assert len(groups) == len(set(groups)) and "attn.q" in groups and "cond.null" in groups
    assert all(l.endswith(",ok") for l in lines[1:-1])


def test_gradcheck_fails_on_corrupted_backward(config_dir, capsys):
    assert main(["gradcheck", "--config", str(config_dir / "gradcheck.ini"), "--corrupt-backward"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_schedule_inspect(tmp_path, capsys):
    assert main(["schedule-inspect", "--T", "3", "--beta-start", "0.1", "--beta-end", "0.3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,beta,alpha,alpha_bar,posterior_variance"
    assert len(lines) == 4
    row = [float(v) for v in lines[2].split(",")]
    assert row[0] == 2 and row[1] == pytest.approx(0.2) and row[3] == pytest.approx(0.9 * 0.8)
    out = tmp_path / "s.csv"
    assert main(["schedule-inspect", "--T", "5", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 6
