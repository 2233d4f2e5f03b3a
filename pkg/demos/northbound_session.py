"""
Talking to the controller over HTTP
===================================

Run the shipped experiment into the caching phase, open the northbound
listener on a free local port and drive it the way an operator would.
"""

import base64
import json
import urllib.request

from conet import sim
from conet.northbound import NorthboundApi, serve

s = sim.Simulation(sim.load_topology(), sim.load_script())
s.run_until(90 * sim.US)

server = serve(NorthboundApi(s), "127.0.0.1", 0)
base = "http://%s:%d" % server.server_address[:2]


def call(method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data, method=method)
    with urllib.request.urlopen(req) as resp:
        return json.load(resp)


contents = call("GET", "/icn/caches/cache/contents")
print(f"{len(contents)} chunks cached, first few: {contents[:3]}")

stats = call("GET", "/icn/stats/interests")
top = sorted(stats.items(), key=lambda kv: -kv[1])[:3]
print("most requested:", top)

flows = call("GET", "/switches/sw1/flows")
print(f"sw1 holds {len(flows)} flow entries; highest priority: {flows[0]}")

# pre-populate a chunk nobody has asked for yet
chunk = b"breaking news" * 100
ack = call("POST", "/icn/caches/cache/push",
           {"name": "foo.com/extra", "csn": 0, "content_b64": base64.b64encode(chunk).decode()})
print("push:", ack)

print("mode:", call("POST", "/icn/mode", {"mode": "mac_learning"}))
flows = call("GET", "/switches/sw1/flows")
print(f"after the switch-off sw1 holds {len(flows)} entries")

server.shutdown()
