"""End-to-end smoke test for the netcohort Python bindings.

Run after `pip install -e crates/netcohort-py --no-build-isolation`:

    python3 python/smoke_test.py
"""

import math
import os
import tempfile

import netcohort as nc


def check(label, ok):
    print(f"  {'ok' if ok else 'FAIL'}  {label}")
    if not ok:
        raise SystemExit(f"smoke test failed at: {label}")


def main():
    print(f"netcohort {nc.__version__}")

    # Preset model: n=200 gives 5 pure blocks of 20 and 4 mixed blocks of 25.
    model = nc.Model.example(1, 200, 0.8, seed=0)
    check("model shape", model.n == 200 and model.k == 5)
    check("theta_bar", abs(model.theta_bar() - 0.8) < 1e-12)
    check("signal scale", abs(model.q() - math.sqrt(200 * 0.8)) < 1e-12)

    row0 = model.membership_row(0)
    row5 = model.membership_row(5)
    row20 = model.membership_row(20)
    check("pure rows one-hot", row0 == [1.0, 0.0, 0.0, 0.0, 0.0] and row0 == row5)
    check("second block differs", row20 == [0.0, 1.0, 0.0, 0.0, 0.0])
    mixed = model.membership_row(100)
    check("mixed row", abs(sum(mixed) - 1.0) < 1e-12 and max(mixed) < 1.0)
    check("mixed block shared", mixed == model.membership_row(101))

    adj = model.sample(seed=42)
    check("adjacency shape", adj.n == 200 and not adj.self_loops)
    rows = adj.to_rows()
    symmetric = all(rows[i][j] == rows[j][i] for i in range(0, 200, 13) for j in range(200))
    binary = all(v in (0.0, 1.0) for r in rows for v in r)
    no_loops = all(rows[i][i] == 0.0 for i in range(200))
    check("adjacency entries", symmetric and binary and no_loops)
    check("degree consistent", adj.degree(7) == sum(rows[7]))

    spec = nc.spectrum(adj, 6)
    check("spectrum shape", len(spec["values"]) == 6 and len(spec["vectors"][0]) == 200)
    check("magnitude order", abs(spec["values"][0]) >= abs(spec["values"][5]))
    check("leading eigenvalue", spec["values"][0] > 50.0)

    k_hat = nc.estimate_k0(adj, scope="group", k=12, multiplier=0.2)
    check("rank estimate", 1 <= k_hat <= 12)

    # Nodes 0 and 5 are both pure in community 1: a null pair.
    null_pair = nc.test_pair(adj, 0, 5, k0=3)
    check("null pair p-value", 0.0 <= null_pair["p_value"] <= 1.0)
    check("pair df", null_pair["df"] == 3 and null_pair["scope"] == "pair")

    # Nodes 0 and 20 sit in different pure communities: a strong alternative.
    alt_pair = nc.test_pair(adj, 0, 20, k0=3)
    check("alt pair rejects", alt_pair["reject"] and alt_pair["p_value"] < 0.01)

    ratio = nc.test_pair(adj, 0, 20, variant="ratio", k0=3)
    check("ratio df", ratio["df"] == 2 and ratio["variant"] == "ratio")

    # The first mixed block (nodes 100..124) shares one profile: a null group.
    group_null = nc.test_group(adj, list(range(100, 110)), seed=7, k0=3)
    check("group calibration", group_null["m"] == 10 and group_null["b_m"] is not None)
    check("coupling size", len(group_null["coupling"]["pairs"]) == 5)
    check("null group p-value", 0.0 <= group_null["p_value"] <= 1.0)

    # Pure community 1 plus pure community 2: the group mixes profiles.
    group_alt = nc.test_group(adj, list(range(15, 25)), seed=7, k0=3)
    check("alt group rejects", group_alt["reject"] and group_alt["p_value"] < 0.01)

    plan = nc.random_coupling(list(range(7)), seed=3)
    used = sorted(v for pair in plan["pairs"] for v in pair) + [plan["dropped_node"]]
    check("odd coupling", len(plan["pairs"]) == 3 and sorted(used) == list(range(7)))

    b_m = nc.gumbel_centering(10, 3)
    expected = 2 * math.log(5.0) + math.log(math.log(5.0)) - 2 * math.lgamma(1.5)
    check("gumbel centering", abs(b_m - expected) < 1e-12)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "graph.csv")
        adj.save(path, format="dense-csv")
        reloaded = nc.Adjacency.load(path, format="dense-csv")
        check("dense roundtrip", reloaded.to_rows() == rows)

        edge_path = os.path.join(tmp, "graph.edges")
        adj.save(edge_path, format="edge-list")
        check("edge roundtrip", nc.Adjacency.load(edge_path, format="edge-list").to_rows() == rows)

    # Correlation panel: series 0 and 1 duplicate each other, 2 is independent.
    t_grid = [0.07 * t for t in range(40)]
    base = [math.sin(x) + 0.1 * math.cos(5 * x) for x in t_grid]
    other = [math.cos(3 * x) for x in t_grid]
    net = nc.correlation_network(["a", "b", "c"], [base, list(base), other], threshold=0.9)
    net_rows = net.to_rows()
    check("planted edge", net_rows[0][1] == 1.0 and net_rows[1][0] == 1.0)
    check("independent series", net_rows[0][2] == 0.0 and net_rows[1][2] == 0.0)

    summary = nc.simulate(1, n=120, m=4, k0=3, level=0.8, reps=8, seed=11, workers=1)
    check("replication ledger", summary["completed"] + summary["failures"] == 8)
    check("rate range", 0.0 <= summary["rate"] <= 1.0)
    check("tally totals", sum(summary["k0_tally"].values()) == summary["completed"])
    check("ecdf grid", len(summary["ecdf"]) == 512 and summary["ecdf"][-1]["empirical"] == 1.0)

    again = nc.simulate(1, n=120, m=4, k0=3, level=0.8, reps=8, seed=11, workers=2)
    check("deterministic sweep", again["statistics"] == summary["statistics"])

    print("smoke test passed")


if __name__ == "__main__":
    main()
