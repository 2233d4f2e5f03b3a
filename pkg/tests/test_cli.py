import json

from conet import cli, sim


def test_validate_defaults(capsys):
    assert cli.main(["validate"]) == 0
    assert "2 switches" in capsys.readouterr().out


def test_validate_reports_errors(tmp_path, capsys):
    bad = sim.default_topology_doc()
    bad["links"].append({"a": "nowhere:eth0", "b": "sw2:2"})
    path = tmp_path / "t.json"
    path.write_text(json.dumps(bad))
    assert cli.main(["validate", "--topology", str(path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_run_writes_trace(tmp_path):
    scr = {"duration_s": 3, "phases": [{"start_s": 0, "mode": "mac_learning"}], "workload": {"files": 4}}
    sp = tmp_path / "s.json"
    sp.write_text(json.dumps(scr))
    out, ev = tmp_path / "trace.csv", tmp_path / "events.jsonl"
    assert cli.main(["run", "--script", str(sp), "--trace-out", str(out), "--events-out", str(ev), "--seed", "3"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "time_s,node,iface,rx_bytes,tx_bytes,cached_items"
    assert len(lines) == 1 + 3 * 8
    assert ev.read_text()
