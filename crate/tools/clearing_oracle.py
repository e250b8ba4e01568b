"""Independent clearing oracle (SciPy/HiGHS) used to freeze expected values
for the bundled cases. Run: python3 tools/clearing_oracle.py cases/<case>.json --bus ID
"""
import argparse
import json

import numpy as np
from scipy.optimize import linprog
from scipy.linalg import null_space


def load(path):
    with open(path) as fh:
        case = json.load(fh)
    buses = case["buses"]
    lines = case["lines"]
    ids = [b["id"] for b in buses]
    idx = {b: i for i, b in enumerate(ids)}
    n, t = len(buses), len(lines)
    inc = np.zeros((n, t))
    x = np.zeros(t)
    for l, ln in enumerate(lines):
        inc[idx[ln["from"]], l] = 1.0
        inc[idx[ln["to"]], l] = -1.0
        x[l] = ln.get("reactance", 1.0)
    slack = idx[case["slack_bus"]]
    bbus = inc @ np.diag(1 / x) @ inc.T
    keep = [i for i in range(n) if i != slack]
    red = np.linalg.inv(bbus[np.ix_(keep, keep)])
    theta = np.zeros((n, n))
    theta[np.ix_(keep, keep)] = red
    g = np.diag(1 / x) @ inc.T @ theta
    h = null_space(g.T).T
    get = lambda k, dflt=None: np.array([b.get(k, dflt) for b in buses], dtype=float)
    return dict(
        ids=ids, idx=idx, inc=inc, g=g, h=h,
        c=get("cost"), p=get("generation"), d=get("demand"),
        dlo=get("redispatch_lo", -2.0), dhi=get("redispatch_hi", 0.1),
        pa=get("aggregator_share", 0.0),
        flo=np.array([ln["flow_lo"] for ln in lines], float),
        fhi=np.array([ln["flow_hi"] for ln in lines], float),
    )


def clear(net, alpha):
    inc, c = net["inc"], net["c"]
    base = net["p"] - alpha - net["d"]
    a_ub = np.vstack([inc, -inc])
    b_ub = np.concatenate([net["dhi"] + base, -(net["dlo"] + base)])
    h = net["h"]
    res = linprog(
        inc.T @ c, A_ub=a_ub, b_ub=b_ub,
        A_eq=h if h.shape[0] else None, b_eq=np.zeros(h.shape[0]) if h.shape[0] else None,
        bounds=list(zip(net["flo"], net["fhi"])), method="highs",
    )
    if res.status != 0:
        return None
    n = len(c)
    # HiGHS marginals are d(obj)/d(b_ub) <= 0 for <= rows
    lam_plus = -res.ineqlin.marginals[:n]
    lam_minus = -res.ineqlin.marginals[n:]
    lmp = c + lam_plus - lam_minus
    return dict(f=res.x, lmp=lmp, obj=res.fun)


def bisect(net, i, lo, hi, lmp_lo):
    """Smallest alpha in (lo, hi] where bus i's LMP leaves lmp_lo."""
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        alpha = np.zeros(len(net["c"]))
        alpha[i] = mid
        out = clear(net, alpha)
        if out is not None and abs(out["lmp"][i] - lmp_lo) <= 1e-7:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("case")
    ap.add_argument("--bus", type=int, required=True)
    ap.add_argument("--points", type=int, default=20001)
    ap.add_argument("--alpha-max", type=float, default=None)
    args = ap.parse_args()
    net = load(args.case)
    i = net["idx"][args.bus]
    pa = net["pa"][i]
    base = clear(net, np.zeros(len(net["c"])))
    print("baseline lmps", np.round(base["lmp"], 9).tolist(), "obj", base["obj"])
    print("baseline flows", np.round(base["f"], 9).tolist())
    top = pa if args.alpha_max is None else min(pa, args.alpha_max)
    grid = np.linspace(0, top, args.points)
    prev = None
    for a in grid:
        alpha = np.zeros(len(net["c"]))
        alpha[i] = a
        out = clear(net, alpha)
        if out is None:
            print(f"infeasible from alpha ~ {a:.6f}")
            break
        if prev is not None and abs(out["lmp"][i] - prev) > 1e-7:
            jump = bisect(net, i, prev_a, a, prev)
            print(f"jump at alpha {jump:.12f}")
        if prev is None or abs(out["lmp"][i] - prev) > 1e-7:
            print(f"alpha {a:.6f}: lmp_i {out['lmp'][i]:.9f}  all {np.round(out['lmp'], 6).tolist()}")
            prev = out["lmp"][i]
        prev_a = a


if __name__ == "__main__":
    main()


def exact_next_jump(net, i, alpha_inside, tol=1e-7):
    """Binding-set route: take the HiGHS vertex at alpha_inside, fix its binding
    constraints, express f(alpha) affinely and ratio-test the slack rows."""
    n, t = net["inc"].shape
    alpha = np.zeros(n)
    alpha[i] = alpha_inside
    out = clear(net, alpha)
    f = out["f"]
    inc = net["inc"]
    base = net["p"] - alpha - net["d"]
    rows, rhs0, drhs = [], [], []
    e = np.zeros(n)
    e[i] = 1.0
    act = inc @ f
    # each entry: (coefficient row, rhs at alpha=0, d rhs / d alpha, is_upper)
    cands = []
    for k in range(n):
        cands.append((inc[k], net["dhi"][k] + net["p"][k] - net["d"][k], -e[k], +1))
        cands.append((-inc[k], -(net["dlo"][k] + net["p"][k] - net["d"][k]), e[k], +1))
    for l in range(t):
        u = np.zeros(t)
        u[l] = 1.0
        cands.append((u, net["fhi"][l], 0.0, +1))
        cands.append((-u, -net["flo"][l], 0.0, +1))
    binding = [c for c in cands if abs(c[0] @ f - (c[1] + c[2] * alpha_inside)) <= tol]
    a_rows = [c[0] for c in binding] + list(net["h"])
    b0 = [c[1] for c in binding] + [0.0] * net["h"].shape[0]
    b1 = [c[2] for c in binding] + [0.0] * net["h"].shape[0]
    a_mat = np.array(a_rows)
    sol0, *_ = np.linalg.lstsq(a_mat, np.array(b0), rcond=None)
    sol1, *_ = np.linalg.lstsq(a_mat, np.array(b1), rcond=None)
    assert np.linalg.matrix_rank(a_mat) == t
    best = np.inf
    for c in cands:
        if any(c is b for b in binding):
            continue
        rate = c[0] @ sol1 - c[2]
        if rate > 1e-12:
            best = min(best, (c[1] - c[0] @ sol0) / rate)
    return best
