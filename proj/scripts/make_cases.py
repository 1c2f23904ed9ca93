"""Builds the JSON grid fixtures in data/cases from MATPOWER-format cases.

Usage: python scripts/make_cases.py <dir containing pypower> [out dir]

The source cases carry no usable thermal ratings, so line limits are derived
from a reference economic dispatch (network ignored): each limit is the
larger of margin * |reference flow| and a floor, rounded up to 5 MW.
"""
import json
import math
import sys
from pathlib import Path

import numpy as np


def ptdf(bus_ids, branches, slack):
    n = len(bus_ids)
    pos = {b: i for i, b in enumerate(bus_ids)}
    B = np.zeros((n, n))
    for f, t, x in branches:
        i, j = pos[f], pos[t]
        B[i, i] += 1 / x
        B[j, j] += 1 / x
        B[i, j] -= 1 / x
        B[j, i] -= 1 / x
    keep = [i for i in range(n) if i != pos[slack]]
    X = np.zeros((n, n))
    X[np.ix_(keep, keep)] = np.linalg.inv(B[np.ix_(keep, keep)])
    H = np.array([(X[pos[f]] - X[pos[t]]) / x for f, t, x in branches])
    return H, pos


def economic_dispatch(gens, demand):
    lo, hi = 0.0, 1e4
    for _ in range(200):
        lam = 0.5 * (lo + hi)
        p = [min(max((lam - g["c1"]) / (2 * g["c2"]) if g["c2"] > 0 else (g["p_max"] if lam > g["c1"] else 0.0),
                     g["p_min"]), g["p_max"]) for g in gens]
        if sum(p) > demand:
            hi = lam
        else:
            lo = lam
    return np.array(p)


def build(ppc, wind_units, keep_gen_buses, margin, floor, name, note):
    buses = ppc["bus"]
    slack = int(buses[buses[:, 1] == 3, 0][0])
    bus_ids = [int(b) for b in buses[:, 0]]
    gens = []
    for k, row in enumerate(ppc["gen"]):
        b = int(row[0])
        if b in keep_gen_buses:
            cost = ppc["gencost"][k]
            gens.append({"id": len(gens) + 1, "bus": b, "p_min": float(row[9]), "p_max": float(row[8]),
                         "c1": float(cost[5]), "c2": float(cost[4])})
    wind = {b: 0.0 for b in bus_ids}
    for b, w in wind_units.items():
        wind[b] = float(w)
    load = {int(r[0]): float(r[2]) for r in buses}
    branches = [(int(r[0]), int(r[1]), float(r[3])) for r in ppc["branch"]]
    H, pos = ptdf(bus_ids, branches, slack)
    demand = sum(load.values()) - sum(wind.values())
    p = economic_dispatch(gens, demand)
    inj = np.zeros(len(bus_ids))
    for g, pg in zip(gens, p):
        inj[pos[g["bus"]]] += pg
    for b in bus_ids:
        inj[pos[b]] += wind[b] - load[b]
    flows = H @ inj
    lines = []
    for k, ((f, t, x), fl) in enumerate(zip(branches, flows)):
        cap = 5 * math.ceil(max(margin * abs(fl), floor) / 5)
        lines.append({"id": k + 1, "from": f, "to": t, "reactance": x, "f_max": float(cap)})
    return {
        "name": name,
        "note": note,
        "base_mva": float(ppc["baseMVA"]),
        "slack_bus": slack,
        "buses": [{"id": b, "load": load[b], "wind_forecast": wind[b]} for b in bus_ids],
        "lines": lines,
        "generators": gens,
    }


def main():
    sys.path.insert(0, sys.argv[1])
    out = Path(sys.argv[2] if len(sys.argv) > 2 else "data/cases")
    from pypower.case14 import case14
    from pypower.case118 import case118

    c118 = case118()
    g = c118["gen"]
    active = [int(b) for b, pg in zip(g[:, 0], g[:, 1]) if pg > 0]
    wind_buses = [12, 31, 46, 54, 59, 61, 87, 100, 103, 111]
    keep = [b for b in active if b not in wind_buses]
    wind = {int(r[0]): float(r[1]) for r in g if int(r[0]) in wind_buses}
    case = build(c118, wind, keep, margin=1.15, floor=40.0, name="ieee118-wind",
                 note="IEEE 118-bus; 10 of the 19 dispatched units (buses 12 31 46 54 59 61 87 100 103 111) "
                      "replaced by wind units whose forecast is the unit's base-case output; "
                      "limits from a reference dispatch")
    (out / "case118_wind.json").write_text(json.dumps(case, indent=1) + "\n")

    c14 = case14()
    wind14 = {4: 30.0, 5: 20.0, 9: 30.0, 13: 15.0, 14: 25.0}
    case = build(c14, wind14, [int(b) for b in c14["gen"][:, 0]], margin=1.2, floor=20.0, name="ieee14-wind",
                 note="IEEE 14-bus with five wind units added; limits from a reference dispatch")
    (out / "case14_wind.json").write_text(json.dumps(case, indent=1) + "\n")


if __name__ == "__main__":
    main()
