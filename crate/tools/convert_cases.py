"""One-off conversion of the published MATPOWER distribution cases into the
repository's per-unit case subset, adding the district device sets and
synthetic thermal ratings. Run from the repository root:

    python3 tools/convert_cases.py <matpower data dir>
"""
import math
import re
import sys

import numpy as np


def table(text, name):
    m = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % name, text, re.S)
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";")
        if line:
            rows.append([float(v) for v in line.split()])
    return rows


def sig10(v):
    if v == 0:
        return 0.0
    return float("%.10g" % v)


def fmt(v):
    r = repr(float(v))
    if r.endswith(".0"):
        r = r[:-2]
    if r == "-0":
        r = "0"
    return r


def newton(buses, branches, base, gens):
    idx = {int(b[0]): i for i, b in enumerate(buses)}
    n = len(buses)
    Y = np.zeros((n, n), complex)
    for br in branches:
        if br[10] == 0:
            continue
        f, t = idx[int(br[0])], idx[int(br[1])]
        y = 1 / complex(br[2], br[3])
        Y[f, f] += y
        Y[t, t] += y
        Y[f, t] -= y
        Y[t, f] -= y
    S = np.array([-(b[2] + 1j * b[3]) / base for b in buses])
    for g in gens:
        S[idx[int(g[0])]] += (g[1] + 1j * g[2]) / base
    V = np.ones(n, complex)
    pq = [i for i in range(n) if buses[i][1] != 3]
    for _ in range(30):
        mis = V * np.conj(Y @ V) - S
        F = np.r_[mis[pq].real, mis[pq].imag]
        if np.max(np.abs(F)) < 1e-12:
            break
        dV = np.diag(V)
        dSdVa = 1j * dV @ np.conj(np.diag(Y @ V) - Y @ dV)
        dSdVm = dV @ np.conj(Y @ np.diag(V / np.abs(V))) + np.diag(V / np.abs(V)) @ np.diag(np.conj(Y @ V))
        J = np.block([[dSdVa[np.ix_(pq, pq)].real, dSdVm[np.ix_(pq, pq)].real],
                      [dSdVa[np.ix_(pq, pq)].imag, dSdVm[np.ix_(pq, pq)].imag]])
        dx = np.linalg.solve(J, -F)
        k = len(pq)
        Va = np.angle(V)
        Vm = np.abs(V)
        Va[pq] += dx[:k]
        Vm[pq] += dx[k:]
        V = Vm * np.exp(1j * Va)
    flows = []
    for br in branches:
        if br[10] == 0:
            flows.append(0.0)
            continue
        f, t = idx[int(br[0])], idx[int(br[1])]
        i = (V[f] - V[t]) / complex(br[2], br[3])
        flows.append(abs(V[f] * np.conj(i)) * base)
    return V, flows


# (kind, bus, pmin, pmax, qmin, qmax, soc_cap, soc_init, eff, c2, c1, c0)
DEVICES = {
    "valley33": [
        ("mgt", 18, 0, 0.4, -0.2, 0.2, 0, 0, 0, 30, 12, 2),
        ("pv", 17, 0, 0.6, 0, 0, 0, 0, 0, 0, 0, 0),
        ("pv", 32, 0, 0.9, 0, 0, 0, 0, 0, 0, 0, 0),
        ("ess", 30, -0.25, 0.25, 0, 0, 1.0, 0.5, 0.95, 0, 0, 0),
        ("svc", 14, 0, 0, -0.3, 0.3, 0, 0, 0, 0, 0, 0),
    ],
    "railway69": [
        ("mgt", 61, 0, 0.5, -0.25, 0.25, 0, 0, 0, 30, 12, 2),
        ("pv", 27, 0, 1.0, 0, 0, 0, 0, 0, 0, 0, 0),
        ("pv", 64, 0, 0.8, 0, 0, 0, 0, 0, 0, 0, 0),
        ("ess", 50, -0.3, 0.3, 0, 0, 1.2, 0.6, 0.95, 0, 0, 0),
        ("svc", 21, 0, 0, -0.4, 0.4, 0, 0, 0, 0, 0, 0),
    ],
    "business141": [
        ("mgt", 84, 0, 1.5, -0.6, 0.6, 0, 0, 0, 25, 14, 3),
        ("pv", 40, 0, 1.2, 0, 0, 0, 0, 0, 0, 0, 0),
        ("pv", 110, 0, 1.5, 0, 0, 0, 0, 0, 0, 0, 0),
        ("ess", 130, -0.5, 0.5, 0, 0, 2.0, 1.0, 0.95, 0, 0, 0),
        ("svc", 70, 0, 0, -0.8, 0.8, 0, 0, 0, 0, 0, 0),
    ],
}
KIND_CODE = {"slack": 1, "mgt": 2, "pv": 3, "ess": 4, "svc": 5}
SOURCES = {"valley33": "case33bw", "railway69": "case69", "business141": "case141"}
TITLES = {
    "valley33": "Valley district feeder (33-bus Baran-Wu network)",
    "railway69": "Railway district feeder (69-bus Baran-Wu network)",
    "business141": "Business district feeder (141-bus Khodr et al. network)",
}


def convert(src_dir, name):
    text = open("%s/%s.m" % (src_dir, SOURCES[name])).read()
    base = table(text, "baseMVA") if False else float(re.search(r"mpc\.baseMVA\s*=\s*([\d.]+)", text).group(1))
    buses = table(text, "bus")
    branches = table(text, "branch")
    slack = table(text, "gen")[0]
    gencost = table(text, "gencost")[0]
    vbase = buses[0][9] * 1e3
    zbase = vbase ** 2 / (base * 1e6)
    for br in branches:
        br[2] = sig10(br[2] / zbase)
        br[3] = sig10(br[3] / zbase)
    for b in buses:
        if "0.85 power factor" in text:
            s = b[2] / 1e3
            b[2] = sig10(s * 0.85)
            b[3] = sig10(s * math.sin(math.acos(0.85)))
        else:
            b[2] = sig10(b[2] / 1e3)
            b[3] = sig10(b[3] / 1e3)
    V, flows = newton(buses, branches, base, [])
    vm = np.abs(V)
    print(name, "buses", len(buses), "branches", len(branches),
          "in-service", sum(1 for b in branches if b[10] == 1),
          "min|V| %.6f at bus %d" % (vm.min(), buses[int(vm.argmin())][0]))
    # Ratings cover the device envelope: base load, peak load with storage
    # charging, and light load with full export from PV (alone and together
    # with the other units).
    def scaled(k):
        return [b[:2] + [b[2] * k, b[3] * k] + b[4:] for b in buses]

    devs = DEVICES[name]
    pv_only = [[d[1], d[3], 0] for d in devs if d[0] == "pv"]
    export = [[d[1], d[3], d[5]] for d in devs if d[0] != "ess"] + \
        [[d[1], d[3], 0] for d in devs if d[0] == "ess"]
    charge = [[d[1], d[2], 0] for d in devs if d[0] == "ess"]
    worst = list(flows)
    for k, gens in [(1.4, charge), (0.5, pv_only), (0.5, export)]:
        _, f2 = newton(scaled(k), branches, base, gens)
        worst = [max(a, b) for a, b in zip(worst, f2)]
    for br, f in zip(branches, worst):
        br[5] = max(0.3, math.ceil(1.25 * f * 10 - 1e-9) / 10) if br[10] == 1 else 0.5
    out = []
    out.append("function mpc = %s" % name)
    out.append("%% %s" % TITLES[name])
    out.append("%% Converted to per-unit on the system base; loads in MW/MVAr.")
    out.append("")
    out.append("mpc.version = '2';")
    out.append("mpc.baseMVA = %s;" % fmt(base))
    out.append("")
    out.append("%% bus data")
    out.append("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    out.append("mpc.bus = [")
    for b in buses:
        out.append("\t" + "\t".join(fmt(v) for v in [b[0], b[1], b[2], b[3], 0, 0, 1, 1, 0, b[9], 1, b[11], b[12]]) + ";")
    out.append("];")
    out.append("")
    out.append("%% generator data")
    out.append("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tkind\tsoc_cap\tsoc_init\teff")
    out.append("mpc.gen = [")
    rows = [[slack[0], 0, 0, slack[3], slack[4], 1, base, 1, slack[8], slack[9], 1, 0, 0, 1]]
    costs = [gencost[4:7]]
    for d in DEVICES[name]:
        kind, bus, pmin, pmax, qmin, qmax, cap, init, eff, c2, c1, c0 = d
        rows.append([bus, 0, 0, qmax, qmin, 1, base, 1, pmax, pmin, KIND_CODE[kind], cap, init, eff if eff else 1])
        costs.append([c2, c1, c0])
    for r in rows:
        out.append("\t" + "\t".join(fmt(v) for v in r) + ";")
    out.append("];")
    out.append("")
    out.append("%% branch data")
    out.append("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax")
    out.append("mpc.branch = [")
    for br in branches:
        out.append("\t" + "\t".join(fmt(v) for v in [br[0], br[1], br[2], br[3], br[4], br[5], 0, 0, 0, 0, br[10], -360, 360]) + ";")
    out.append("];")
    out.append("")
    out.append("%% generator cost data")
    out.append("%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0")
    out.append("mpc.gencost = [")
    for c in costs:
        out.append("\t" + "\t".join(fmt(v) for v in [2, 0, 0, 3] + list(c)) + ";")
    out.append("];")
    open("data/cases/%s.m" % name, "w").write("\n".join(out) + "\n")


for n in DEVICES:
    convert(sys.argv[1], n)
