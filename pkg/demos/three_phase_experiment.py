"""
Cache takeover in a two-switch domain
=====================================

A client asks for 208 chunks in round-robin, one carrier packet every 50 ms.
The controller starts as a plain learning switch, turns on ICN caching at
60 s and turns it off again at 180 s.  Watch the server's traffic drain to
the cache and come back.
"""

from conet import sim

topology = sim.load_topology()
script = sim.load_script()
result = sim.run(topology, script)

# per-10-second averages of bytes sent by each host
def tx_per_window(node, width=10):
    rows = result.series(node)
    return [sum(r.tx_bytes for r in rows[i : i + width]) // width for i in range(0, len(rows), width)]

print("window   server tx   cache tx   cached items")
cache_rows = result.series("cache")
for i, (srv, cch) in enumerate(zip(tx_per_window("server"), tx_per_window("cache"))):
    items = cache_rows[min(len(cache_rows) - 1, i * 10 + 9)].cached_items
    bar = "#" * (srv // 1000)
    print(f"{i * 10:4d}s  {srv:9d}  {cch:9d}  {items:6d}   {bar}")

# the mode changes and the first cache notification, straight from the event log
for e in result.events:
    if e["kind"] == "mode_change":
        print(f"t={e['t_us'] / 1e6:7.3f}s  mode {e['previous']} -> {e['mode']}")

first = next(e for e in result.events if e["kind"] == "notification")
print(f"first chunk cached at t={first['t_us'] / 1e6:.3f}s: {first['name']}#{first['csn']}")

client = result.sim.hosts["client"]
by_source = {}
for d in client.deliveries:
    by_source[d.source] = by_source.get(d.source, 0) + 1
print("data packets delivered by source:", by_source)
