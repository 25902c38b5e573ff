import io
import json
import xml.etree.ElementTree as ET

import pytest

from aqe.errors import InvalidArgument
from aqe.metrics import FIELD_NAMES, MetricRecord, MetricsParseError, append_metrics, read_metrics, write_metrics
from aqe.plot import group_name, plot

SVG = "{http://www.w3.org/2000/svg}"


def rec(step, ret=-1000.0, **kw):
    return MetricRecord(step, ret, 5.0, **kw)


def write_run(path, returns, step=1000):
    for i, r in enumerate(returns):
        append_metrics(rec(i * step, r, critic_loss_mean=0.5 + i), path)
    return path


def test_round_trip(tmp_path):
    p = tmp_path / "a.metrics.jsonl"
    rs = [rec(0), rec(1000, -800.0, critic_loss_mean=1.5, actor_objective=-3.0, alpha=0.2, bias_mean=0.1, bias_std=0.3,
                      wallclock_s=12.5)]
    for r in rs:
        append_metrics(r, p)
    assert read_metrics(p) == rs


def test_field_names_exact():
    buf = io.StringIO()
    write_metrics(rec(0), buf)
    assert list(json.loads(buf.getvalue())) == FIELD_NAMES
    assert FIELD_NAMES == ["env_steps", "eval_return_mean", "eval_return_std", "critic_loss_mean", "actor_objective",
                           "alpha", "bias_mean", "bias_std", "wallclock_s"]


def test_append_never_rewrites(tmp_path):
    p = tmp_path / "a.metrics.jsonl"
    append_metrics(rec(0), p)
    first = p.read_bytes()
    append_metrics(rec(1000), p)
    assert p.read_bytes().startswith(first)


def test_missing_optional_fields_accepted(tmp_path):
    p = tmp_path / "a.metrics.jsonl"
    p.write_text('{"env_steps": 0, "eval_return_mean": -1.0, "eval_return_std": 0.0}\n')
    assert read_metrics(p)[0].bias_mean is None


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "a.metrics.jsonl"
    p.write_text('{"env_steps": 0, "eval_return_mean": -1.0, "eval_return_std": 0.0}\n{oops\n')
    with pytest.raises(MetricsParseError) as exc:
        read_metrics(p)
    assert exc.value.lineno == 2 and ":2:" in str(exc.value)
    p.write_text('{"env_steps": 0, "eval_return_mean": -1.0}\n')
    with pytest.raises(MetricsParseError):
        read_metrics(p)


def test_group_name():
    assert group_name("aqe_seed3") == "aqe"
    assert group_name("aqe-s12") == "aqe"
    assert group_name("aqe") == "aqe"


def test_single_run_polyline(tmp_path):
    p = write_run(tmp_path / "solo.metrics.jsonl", [-1200, -900, -400, -180])
    out = plot([p], "eval_return_mean", tmp_path / "solo.svg")
    root = ET.parse(out).getroot()
    lines = root.findall(f"{SVG}polyline")
    assert len(lines) == 1
    assert len(lines[0].get("points").split()) == 4
    assert root.findall(f"{SVG}polygon") == []
    texts = [t.text for t in root.iter(f"{SVG}text")]
    assert "env_steps" in texts and "eval_return_mean" in texts and "solo" in texts


def test_seed_group_band(tmp_path):
    paths = [write_run(tmp_path / f"aqe_seed{s}.metrics.jsonl", [-1000 + 100 * s, -500 - s, -200 + s]) for s in range(5)]
    out = plot(paths, "eval_return_mean", tmp_path / "g.svg")
    root = ET.parse(out).getroot()
    assert len(root.findall(f"{SVG}polyline")) == 1
    assert len(root.findall(f"{SVG}polygon")) == 1
    assert any(t.text == "aqe (n=5)" for t in root.iter(f"{SVG}text"))


def test_unknown_field_lists_available(tmp_path):
    p = write_run(tmp_path / "a.metrics.jsonl", [-1.0])
    with pytest.raises(InvalidArgument) as exc:
        plot([p], "score", tmp_path / "x.svg")
    assert "eval_return_mean" in str(exc.value) and "bias_mean" in str(exc.value)


def test_empty_metrics_no_output(tmp_path):
    p = tmp_path / "empty.metrics.jsonl"
    p.write_text("")
    out = tmp_path / "x.svg"
    with pytest.raises(InvalidArgument):
        plot([p], "eval_return_mean", out)
    assert not out.exists()


def test_non_monotone_rejected(tmp_path):
    p = tmp_path / "bad.metrics.jsonl"
    append_metrics(rec(1000), p)
    append_metrics(rec(1000), p)
    out = tmp_path / "x.svg"
    with pytest.raises(MetricsParseError):
        plot([p], "eval_return_mean", out)
    assert not out.exists()
