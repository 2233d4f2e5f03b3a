import copy
import json
from collections import Counter

import pytest

from conet import sim
from conet.naming import parse_name


def script(phases=(("mac_learning", 0),), duration=20, **workload):
    wl = {"files": 8, "interval_ms": 50, "seed": 1}
    wl.update(workload)
    return sim.ExperimentScript.from_json(
        {
            "duration_s": duration,
            "phases": [{"start_s": t, "mode": m} for m, t in phases],
            "workload": wl,
        }
    )


def topo_doc():
    return copy.deepcopy(sim.default_topology_doc())


def run(phases=(("mac_learning", 0),), duration=20, topology=None, **workload):
    topo = sim.Topology.from_json(topology or topo_doc())
    return sim.run(topo, script(phases, duration, **workload))


# -- configuration


def test_shipped_defaults_validate():
    topo, scr = sim.load_topology(), sim.load_script()
    assert [s.id for s in topo.switches] == ["sw1", "sw2"]
    assert len(topo.links) == 4
    assert [p.start_us for p in scr.phases] == [0, 60 * sim.US, 180 * sim.US]
    assert scr.workload.files == 208 and scr.workload.interval_us == 50_000


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["links"].append({"a": "ghost:eth0", "b": "sw2:2"}),
        lambda d: d["links"].append({"a": "sw1:9", "b": "sw2:2"}),
        lambda d: d["links"].append({"a": "sw2:2", "b": "sw1:3"}),
        lambda d: d["hosts"][1].update(conet_ip="192.168.1.23"),
        lambda d: d.update(controllers=[{"id": "a"}, {"id": "b"}]),
        lambda d: d.pop("controller"),
        lambda d: d["hosts"][0].update(role="router"),
        lambda d: d["hosts"][0].update(colour="red"),
        lambda d: d["links"].pop(),
        lambda d: d["links"][0].update(a="client"),
        lambda d: d["switches"].append({"id": "sw1", "ports": [1]}),
    ],
)
def test_topology_errors(mutate):
    doc = topo_doc()
    mutate(doc)
    with pytest.raises(sim.ConfigError):
        sim.Topology.from_json(doc)


@pytest.mark.parametrize(
    "doc",
    [
        {"duration_s": 10, "phases": [{"start_s": 5, "mode": "caching"}, {"start_s": 5, "mode": "mac_learning"}]},
        {"duration_s": 10, "phases": [{"start_s": 6, "mode": "caching"}, {"start_s": 2, "mode": "mac_learning"}]},
        {"duration_s": 10, "phases": [{"start_s": 0, "mode": "warp"}]},
        {"duration_s": 10, "phases": [{"start_s": 12, "mode": "caching"}]},
        {"duration_s": 10, "workload": {"files": 0}},
        {"duration_s": 10, "workload": {"interval_ms": 0}},
        {"duration_s": 10, "workload": {"order": "zigzag"}},
        {"duration_s": 0},
        {"phases": []},
        {"duration_s": 10, "actions": [{"at_s": 1, "op": "explode"}]},
    ],
)
def test_script_errors(doc):
    with pytest.raises(sim.ConfigError):
        sim.ExperimentScript.from_json(doc)


# -- request generation


def test_round_robin_modular():
    catalog = [(parse_name("a/x"), 0, 1), (parse_name("a/y"), 0, 1)]
    reqs = sim.gen_requests(catalog, 4, interval_us=10)
    assert Counter(str(r.name) for r in reqs) == {"a/x": 2, "a/y": 2}
    assert [r.time_us for r in reqs] == [0, 10, 20, 30]


def test_segments_are_enumerated():
    reqs = sim.gen_requests([(parse_name("a/x"), 3, 2)], 3)
    assert [(r.csn, r.segment) for r in reqs] == [(3, 1), (3, 2), (3, 1)]


def test_random_schedule_reproducible():
    catalog = [(parse_name(f"a/{i}"), 0, 4) for i in range(10)]
    a = sim.gen_requests(catalog, 50, seed=9, order="random")
    assert a == sim.gen_requests(catalog, 50, seed=9, order="random")
    assert a != sim.gen_requests(catalog, 50, seed=10, order="random")


def test_empty_catalog():
    with pytest.raises(sim.ConfigError):
        sim.gen_requests([], 3)


def test_catalog_shape():
    cat = sim.Catalog(sim.Workload(files=3))
    chunks = cat.chunks()
    assert [str(n) for n, _, _ in chunks] == ["foo.com/file000", "foo.com/file001", "foo.com/file002"]
    assert {(c, t) for _, c, t in chunks} == {(0, 4)}
    assert len(cat.chunk_bytes("foo.com/file001", 0)) == 4096


# -- runs


def test_zero_requests_all_zero():
    result = run(count=0, duration=5)
    assert result.trace and all(r.rx_bytes == r.tx_bytes == 0 for r in result.trace)
    assert {r.time_s for r in result.trace} == set(range(5))


def test_determinism():
    a = sim.trace_csv(run(order="random", seed=4).trace)
    b = sim.trace_csv(run(order="random", seed=4).trace)
    assert a == b
    assert a.splitlines()[0] == "time_s,node,iface,rx_bytes,tx_bytes,cached_items"


def test_seed_override():
    topo = sim.load_topology()
    a = sim.Simulation(topo, script(order="random"), seed=7).run()
    b = sim.Simulation(topo, script(order="random", seed=7)).run()
    assert sim.trace_csv(a.trace) == sim.trace_csv(b.trace)


def _check_conservation(result):
    topo = result.sim.topology
    by_key = {(r.time_s, r.node, r.iface): r for r in result.trace}
    times = {r.time_s for r in result.trace}
    for ln in topo.links:
        for t in times:
            a, b = by_key[(t, *ln.a)], by_key[(t, *ln.b)]
            assert a.tx_bytes == b.rx_bytes and b.tx_bytes == a.rx_bytes


def test_link_conservation_every_bucket():
    _check_conservation(run(phases=(("mac_learning", 0), ("caching", 5), ("mac_learning", 12))))


def test_cache_silent_without_caching():
    result = run()
    assert all(r.rx_bytes == r.tx_bytes == 0 for r in result.series("cache"))
    assert all(r.cached_items == 0 for r in result.series("cache"))
    assert all(r.cached_items is None for r in result.series("client"))


def test_all_deliveries_intact():
    result = run(phases=(("mac_learning", 0), ("caching", 5)))
    client = result.sim.hosts["client"]
    assert client.counters["requests"] == client.counters["data_received"] == 400
    assert all(d.intact for d in client.deliveries)
    assert {d.source for d in client.deliveries} == {"server", "cache"}


def test_eviction_falls_back_to_origin():
    doc = topo_doc()
    doc["hosts"][2]["capacity"] = 3
    result = run(phases=(("caching", 0),), topology=doc)
    client = result.sim.hosts["client"]
    assert client.counters["data_received"] == client.counters["requests"]
    assert all(d.intact for d in client.deliveries)
    assert result.sim.caches["cache"].counters["nacks"] > 0
    assert any(e["kind"] == "nack" for e in result.events)
    assert len(result.sim.caches["cache"].inventory()) == 3


def _replay(events, switch):
    table = {}
    for e in events:
        if e["kind"] != "flow_mod" or e["switch"] != switch:
            continue
        if e["op"] == "add":
            key = (e["entry"]["priority"], json.dumps(e["entry"]["match"], sort_keys=True))
            if key in table:
                table[key].update(actions=e["entry"]["actions"], cookie=e["entry"]["cookie"])
            else:
                table[key] = dict(e["entry"])
        else:
            table = {k: v for k, v in table.items() if v["cookie"] != e["cookie"]}
    return sorted(table.values(), key=lambda v: -v["priority"])


@pytest.mark.parametrize(
    "phases",
    [
        (("mac_learning", 0), ("caching", 5)),
        (("mac_learning", 0), ("caching", 5), ("mac_learning", 12)),
    ],
)
def test_event_log_replay_rebuilds_flow_tables(phases):
    result = run(phases=phases)
    for sw_id, sw in result.sim.switches.items():
        assert _replay(result.events, sw_id) == sw.flows_json()


def test_event_log_has_timestamps_and_kinds():
    result = run(phases=(("mac_learning", 0), ("caching", 5)))
    kinds = Counter(e["kind"] for e in result.events)
    for k in ("lookup", "flow_mod", "notification", "mode_change", "packet_in"):
        assert kinds[k] > 0
    times = [e["t_us"] for e in result.events]
    assert times == sorted(times)


def test_push_action():
    scr = sim.ExperimentScript.from_json(
        {
            "duration_s": 5,
            "phases": [{"start_s": 0, "mode": "caching"}],
            "workload": {"files": 4},
            "actions": [{"at_s": 0, "op": "push_all", "cache": "cache"}],
        }
    )
    result = sim.run(sim.load_topology(), scr)
    assert all(r.tx_bytes == 0 for r in result.series("server"))
    assert all(d.source == "cache" for d in result.sim.hosts["client"].deliveries)


def test_write_files(tmp_path):
    result = run(duration=3)
    sim.write_trace(result.trace, tmp_path / "t.csv")
    sim.write_events(result.events, tmp_path / "e.jsonl")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert len(rows) == 1 + 3 * 8
    first = json.loads((tmp_path / "e.jsonl").read_text().splitlines()[0])
    assert "t_us" in first and "kind" in first
