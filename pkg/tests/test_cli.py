import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from aqe.cli import _parse_overrides, _seed_range, cli_main


def run(argv, capsys):
    code = cli_main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_unknown_subcommand_is_usage_error(capsys):
    code, _, err = run(["frobnicate"], capsys)
    assert code == 2
    assert "usage" in err


def test_no_subcommand(capsys):
    assert run([], capsys)[0] == 2


def test_stray_flags_rejected_outside_train(capsys):
    code, _, err = run(["gradcheck", "--bogus", "1"], capsys)
    assert code == 2 and "unrecognized" in err


def test_gradcheck(capsys):
    code, out, _ = run(["gradcheck", "--nets", "10"], capsys)
    assert code == 0
    assert out.startswith("max relative error: ")
    assert float(out.split(":")[1]) <= 1e-5


def test_theorem1_json(capsys):
    code, out, _ = run(["theorem1", "--seed", "7", "--samples", "20000"], capsys)
    report = json.loads(out)
    assert report["seed"] == 7
    assert report["checks"] and all(c.get("samples", 20000) == 20000 for c in report["checks"])
    assert isinstance(report["passed"], bool)
    assert code == (0 if report["passed"] else 1)


def test_tabular_json(capsys):
    code, out, _ = run(["tabular", "--N", "2", "--K", "2", "--steps", "2000", "--log-every", "500"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert [t[0] for t in rep["trace"]] == [500, 1000, 1500, 2000]
    assert rep["final_sup_error"] == rep["trace"][-1][1]


def test_overrides_parsing():
    assert _parse_overrides(["--N", "3", "--run-name=x"]) == {"N": "3", "run_name": "x"}
    assert _seed_range("2..4") == [2, 3, 4]
    assert _seed_range("7") == [7]


def test_bad_config_key_one_line_reason(tmp_path, capsys):
    code, out, err = run(["train", "--output_dir", str(tmp_path), "--bogus", "1"], capsys)
    assert code == 1
    assert out == ""
    assert err.count("\n") == 1 and "bogus" in err


def test_train_plot_eval_bias_pipeline(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "N = 2\nh = 1\nK = 1\nG = 1\nhidden = 8\nbatch_size = 8\nstart_steps = 10\n"
        f"total_env_steps = 40\neval_every = 20\neval_episodes = 1\nbuffer_size = 100\noutput_dir = {tmp_path}\n"
        "run_name = demo\n"
    )
    code, out, _ = run(["train", "--config", str(cfg), "--seeds", "0..1"], capsys)
    assert code == 0
    lines = [json.loads(x) for x in out.splitlines()]
    assert [x["run_name"] for x in lines] == ["demo_seed0", "demo_seed1"]
    assert all(x["env_steps"] == 40 for x in lines)

    svg = tmp_path / "curve.svg"
    code, out, _ = run(["plot", lines[0]["metrics"], lines[1]["metrics"], "--out", str(svg)], capsys)
    assert code == 0 and svg.exists()
    root = ET.parse(svg).getroot()
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 1

    ckpt = lines[0]["checkpoint"]
    code, out, _ = run(["eval", ckpt, "--episodes", "2"], capsys)
    ev = json.loads(out)
    assert code == 0 and ev["episodes"] == 2
    code, out, _ = run(["bias", ckpt, "--pairs", "2", "--horizon", "5"], capsys)
    b = json.loads(out)
    assert code == 0 and b["num_pairs"] == 2 and b["mc_horizon"] == 5


def test_missing_checkpoint_exit_1(tmp_path, capsys):
    code, _, err = run(["eval", str(tmp_path / "nope.ckpt")], capsys)
    assert code == 1 and err.startswith("aqe eval:")


def test_plot_unknown_field_exit_1(tmp_path, capsys):
    m = tmp_path / "a.metrics.jsonl"
    m.write_text('{"env_steps": 0, "eval_return_mean": -1.0, "eval_return_std": 0.0}\n')
    code, _, err = run(["plot", str(m), "--field", "score", "--out", str(tmp_path / "x.svg")], capsys)
    assert code == 1 and "eval_return_mean" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "aqe", "gradcheck", "--nets", "3"], capture_output=True, text=True)
    assert proc.returncode == 0 and "max relative error" in proc.stdout
