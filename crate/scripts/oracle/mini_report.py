#!/usr/bin/env python3
"""Independent oracle for the report bundle on the mini fixture.

Reads the fixture registry and snapshot CSVs and recomputes every CSV export
from first principles with numpy/scipy. Output files carry no run-hash
comment line; the golden test strips that line from the engine's output
before comparing bytes.

The URL handling here is deliberately minimal and only covers what the
fixture uses: scheme-less host[/path] entries, dynamic URLs (a `?`), hosts
outside the university's domains, and redirect targets.

Usage: mini_report.py <fixture dir> <golden out dir>
"""

import csv
import io
import math
import os
import sys

import numpy as np
from scipy import stats

TYPES = [
    "faculty", "school", "business_school", "lifelong_learning",
    "department", "research_group", "research_center", "university_institute",
    "otri", "foundation", "science_park",
    "library", "archive", "documentation_center", "publishing_service",
    "vice_rectorate", "administrative_service",
    "repository", "catalog", "digital_collection", "blog_platform",
    "virtual_campus", "video_platform",
]
TOP_N = [50, 100, 200, 500, 1000]
TOP_K = 1000
ANOMALY_K = 5.0
ANOMALY_FLOOR = 10.0
WIF_THRESHOLD = 500.0
METRICS = ["size", "visibility"]
KEY = {"size": "rs", "visibility": "rv"}

# Values closer than this to a rounding tie could format differently
# under tiny floating-point differences, so the oracle refuses them.
BOUNDARY_EPS = 1e-6


def check_boundary(v, decimals):
    scaled = abs(v) * 10**decimals
    frac = scaled - math.floor(scaled)
    if abs(frac - 0.5) < BOUNDARY_EPS:
        raise SystemExit(f"value {v!r} sits on a {decimals}-decimal rounding boundary")


def num(v, decimals):
    if v is None:
        return "NA"
    check_boundary(v, decimals)
    s = f"{v:.{decimals}f}"
    if s.startswith("-") and set(s[1:]) <= set("0."):
        s = s[1:]
    return s


def count(v):
    return "NA" if v is None else str(v)


def norm_url(raw):
    raw = raw.strip()
    if "://" not in raw:
        raw = "http://" + raw
    scheme, rest = raw.split("://", 1)
    host, _, path = rest.partition("/")
    url = scheme.lower() + "://" + host.lower()
    path = path.rstrip("/")
    if path:
        url += "/" + path
    return url


def host_of(url):
    return url.split("://", 1)[1].split("/", 1)[0]


def load_registry(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(r for r in f if not r.startswith("#")))
    unis = {}
    for r in rows:
        if r["url_role"] == "unit":
            continue
        u = unis.setdefault(r["university_id"], {"general": [], "domains": []})
        url = norm_url(r["url"])
        u["general"].append(url)
        u["domains"].append(host_of(url))
    units = {}
    for r in rows:
        if r["url_role"] != "unit":
            continue
        uni = r["university_id"]
        unit = units.setdefault(
            r["unit_id"],
            {"uni": uni, "type": r["unit_type"], "urls": [], "first_wave": 1},
        )
        if r.get("first_wave"):
            unit["first_wave"] = int(r["first_wave"])
        for raw in [r["url"], r.get("redirect_target", "")]:
            if not raw:
                continue
            url = norm_url(raw)
            host = host_of(url)
            if "?" in url:
                continue
            if not any(host == d or host.endswith("." + d) for d in unis[uni]["domains"]):
                continue
            unit["urls"].append(url)
    return unis, {k: v for k, v in units.items() if v["urls"]}


def load_snapshots(folder):
    snaps = {}
    for name in sorted(os.listdir(folder)):
        if not (name.startswith("snapshot") and name.endswith(".csv")):
            continue
        with open(os.path.join(folder, name), newline="") as f:
            for r in csv.DictReader(line for line in f if not line.startswith("#")):
                s = snaps.setdefault(r["wave_label"], {"records": {}, "missing": {}})
                if r["flags"].startswith("missing:"):
                    s["missing"][r["url"]] = r["flags"][len("missing:"):]
                else:
                    s["records"][r["url"]] = (int(r["page_count"]), int(r["visibility"]))
    labels = sorted(snaps)
    return labels, [snaps[l] for l in labels]


def add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def url_series(urls, snaps, first_wave=1):
    out = []
    for i, s in enumerate(snaps):
        if first_wave > i + 1:
            out.append(None)
            continue
        total = None
        for u in urls:
            if u in s["records"]:
                total = add(total or (0, 0), s["records"][u])
        out.append(total)
    return out


def sum_members(series_list, n):
    if not series_list:
        return [(0, 0)] * n
    out = []
    for w in range(n):
        vals = [s[w] for s in series_list if s[w] is not None]
        total = None
        for v in vals:
            total = add(total or (0, 0), v)
        out.append(total)
    return out


def months(label):
    y, m = label.split("-")
    return int(y) * 12 + int(m)


def growth(values, labels):
    measured = [(i, v) for i, v in enumerate(values) if v is not None]
    if not measured:
        return None
    (i0, first), (i1, last) = measured[0], measured[-1]
    periods = months(labels[i1]) - months(labels[i0])
    if periods == 0 or first == 0:
        return None
    if last == 0:
        return -100.0
    return 100.0 * ((last / first) ** (1.0 / periods) - 1.0)


def mean(xs):
    return sum(xs) / len(xs) if xs else None


def indicator_table(entities, labels):
    n = len(labels)
    mi = {"size": 0, "visibility": 1}
    table = {"rows": {}, "degenerate": []}
    shares = {m: [] for m in METRICS}
    for w in range(n):
        for m in METRICS:
            vals = {k: s[w][mi[m]] for k, s in entities.items() if s[w] is not None}
            total = sum(vals.values())
            if total == 0:
                table["degenerate"].append((w, m))
                shares[m].append({k: 0.0 for k in vals})
            else:
                shares[m].append({k: 100.0 * v / total for k, v in vals.items()})
    for k, s in entities.items():
        row = {"series": s}
        for m in METRICS:
            monthly = [shares[m][w].get(k) for w in range(n)]
            values = [None if x is None else x[mi[m]] for x in s]
            row[m] = {
                "monthly": monthly,
                "R": mean([x for x in monthly if x is not None]),
                "r": growth(values, labels),
                "values": values,
                "share_uni": None,
                "share_type": None,
            }
        row["wif"] = [None if (x is None or x[0] == 0) else x[1] / x[0] for x in s]
        row["wif_mean"] = mean([x for x in row["wif"] if x is not None])
        table["rows"][k] = row
    return table


def scoped(values, totals):
    shares, defined = [], False
    for v, t in zip(values, totals):
        if v is None:
            continue
        if t > 0:
            defined = True
            shares.append(100.0 * v / t)
        else:
            shares.append(0.0)
    return mean(shares) if defined else None


def ratio(i, g):
    if g <= 0:
        return None, ("undefined_ratio" if i > 0 else None)
    r = 100.0 * i / g
    return r, ("inconsistent" if r > 100.0 else None)


def r_values(table, m):
    return {k: row[m]["R"] for k, row in table["rows"].items() if row[m]["R"] is not None}


def rank(values):
    order = sorted(values.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(i + 1, k, v) for i, (k, v) in enumerate(order)]


def spearman(xs, ys):
    keys = sorted(set(xs) & set(ys))
    if len(keys) < 3:
        return len(keys), None
    x = np.array([xs[k] for k in keys])
    y = np.array([ys[k] for k in keys])
    if np.all(x == x[0]) or np.all(y == y[0]):
        return len(keys), None
    return len(keys), float(stats.spearmanr(x, y).statistic)


def pca(xs, ys):
    keys = [k for k in sorted(xs) if k in ys]
    pts = np.array([[xs[k], ys[k]] for k in keys], dtype=float)
    if len(keys) < 3:
        return keys, None
    sd = pts.std(axis=0, ddof=1)
    if np.all(sd == 0):
        return keys, None
    sd = np.where(sd > 0, sd, 1.0)
    z = (pts - pts.mean(axis=0)) / sd
    cov = z.T @ z / (len(keys) - 1)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    v1 = v[:, 0]
    s = v1.sum()
    if s < -1e-12 or (abs(s) <= 1e-12 and v1[0] < 0):
        v1 = -v1
    v2 = np.array([-v1[1], v1[0]])
    lam = [float(w[0]), max(float(w[1]), 0.0)]
    total = lam[0] + lam[1]
    return keys, {
        "components": [v1, v2],
        "eigenvalues": lam,
        "explained": [100.0 * lam[0] / total, 100.0 * lam[1] / total],
        "scores": [(float(p @ v1), float(p @ v2)) for p in z],
    }


def anomalies(series):
    measured = [(i, v) for i, v in enumerate(series) if v is not None]
    if len(measured) < 3:
        return []
    out = []
    for i, v in measured:
        med = float(np.median([x for j, x in measured if j != i]))
        if v > max(ANOMALY_K * med, ANOMALY_FLOOR):
            out.append((i, v, med, "high"))
        elif med >= ANOMALY_FLOOR and v < med / ANOMALY_K:
            out.append((i, v, med, "low"))
    return out


class Out:
    def __init__(self, header):
        self.buf = io.StringIO()
        self.w = csv.writer(self.buf, lineterminator="\n")
        self.w.writerow(header)

    def row(self, fields):
        self.w.writerow(fields)

    def text(self):
        return self.buf.getvalue()


def main(fixture, out_dir):
    unis, units = load_registry(os.path.join(fixture, "registry.csv"))
    labels, snaps = load_snapshots(fixture)
    n = len(labels)

    unit_series = {k: url_series(u["urls"], snaps, u["first_wave"]) for k, u in units.items()}
    general_series = {k: url_series(u["general"], snaps) for k, u in unis.items()}
    type_members = {t: sorted(k for k, u in units.items() if u["type"] == t) for t in TYPES}
    uni_members = {k: sorted(x for x, u in units.items() if u["uni"] == k) for k in unis}
    type_series = {t: sum_members([unit_series[k] for k in m], n) for t, m in type_members.items()}
    internal_series = {k: sum_members([unit_series[x] for x in m], n) for k, m in uni_members.items()}

    general = indicator_table(general_series, labels)
    types = indicator_table(type_series, labels)
    internal = indicator_table(internal_series, labels)
    unit_tab = indicator_table(unit_series, labels)
    mi = {"size": 0, "visibility": 1}
    for k, row in unit_tab["rows"].items():
        u = units[k]
        for m in METRICS:
            tot = lambda s: [0 if x is None else x[mi[m]] for x in s]
            row[m]["share_uni"] = scoped(row[m]["values"], tot(internal_series[u["uni"]]))
            row[m]["share_type"] = scoped(row[m]["values"], tot(type_series[u["type"]]))

    files = {}

    # indicators_units.csv
    o = Out(["entity_id", "metric"] + [f"share_{l}" for l in labels] + ["R"]
            + [f"wif_{l}" for l in labels] + ["wif_mean", "r_percent", "share_uni", "share_type"])
    for k in sorted(unit_tab["rows"]):
        row = unit_tab["rows"][k]
        for m in METRICS:
            x = row[m]
            o.row([k, m] + [num(s, 2) for s in x["monthly"]] + [num(x["R"], 2)]
                  + [num(w, 4) for w in row["wif"]]
                  + [num(row["wif_mean"], 4), num(x["r"], 2), num(x["share_uni"], 2), num(x["share_type"], 2)])
    files["indicators_units.csv"] = o.text()

    # consistency
    acc_ratio = {}
    for k in unis:
        sums = {m: [0, 0] for m in METRICS}
        for w in range(n):
            i, g = internal_series[k][w], general_series[k][w]
            if i is not None and g is not None:
                for m in METRICS:
                    sums[m][0] += i[mi[m]]
                    sums[m][1] += g[mi[m]]
        acc_ratio[k] = {m: ratio(*sums[m]) for m in METRICS}

    # aggregates.csv
    o = Out(["scope_kind", "scope_id"] + [f"size_{l}" for l in labels] + [f"visibility_{l}" for l in labels]
            + ["R_s", "R_v", "wif_mean", "r_size", "r_visibility", "ratio_size", "ratio_visibility", "flags"])
    for kind, tab, members in [
        ("uni_general", general, None),
        ("unit_type", types, type_members),
        ("uni_internal", internal, uni_members),
    ]:
        for k in sorted(tab["rows"]):
            row = tab["rows"][k]
            s = row["series"]
            fields = [kind, k] + [count(None if x is None else x[0]) for x in s] \
                + [count(None if x is None else x[1]) for x in s]
            fields += [num(row["size"]["R"], 2), num(row["visibility"]["R"], 2), num(row["wif_mean"], 4),
                       num(row["size"]["r"], 2), num(row["visibility"]["r"], 2)]
            flags = set()
            if members is not None and not members[k]:
                flags.add("no_members")
            if kind == "uni_internal":
                for m in METRICS:
                    r, f = acc_ratio[k][m]
                    fields.append(num(r, 2))
                    if f:
                        flags.add(f)
            else:
                fields += ["NA", "NA"]
            fields.append(";".join(sorted(flags)))
            o.row(fields)
    files["aggregates.csv"] = o.text()

    # consistency.csv
    def cons_fields(scope, wave, pair):
        fields, flags = [scope, wave], set()
        for m in METRICS:
            if pair is None:
                fields += ["NA", "NA", "NA"]
                continue
            i, g = pair[0][mi[m]], pair[1][mi[m]]
            r, f = ratio(i, g)
            fields += [str(i), str(g), num(r, 2)]
            if f:
                flags.add(f"{m}:{f}")
        return fields + [";".join(sorted(flags))]

    o = Out(["scope", "wave", "internal_size", "general_size", "ratio_size",
             "internal_visibility", "general_visibility", "ratio_visibility", "flags"])
    system = [None] * n
    for k in sorted(unis):
        acc = None
        for w in range(n):
            i, g = internal_series[k][w], general_series[k][w]
            pair = (i, g) if i is not None and g is not None else None
            if pair:
                acc = (add(acc[0], i), add(acc[1], g)) if acc else (i, g)
                system[w] = (add(system[w][0], i), add(system[w][1], g)) if system[w] else (i, g)
            o.row(cons_fields(k, labels[w], pair))
        o.row(cons_fields(k, "all", acc))
    acc = None
    for w in range(n):
        if system[w]:
            acc = (add(acc[0], system[w][0]), add(acc[1], system[w][1])) if acc else system[w]
        o.row(cons_fields("system", labels[w], system[w]))
    o.row(cons_fields("system", "all", acc))
    files["consistency.csv"] = o.text()

    # rankings
    tables = [("units", unit_tab), ("types", types), ("uni_internal", internal), ("uni_general", general)]
    rankings = {}
    for scope, tab in tables:
        for m in METRICS:
            key = f"{scope}_{KEY[m]}"
            rankings[key] = rank(r_values(tab, m))
            o = Out(["position", "entity", "value"])
            for pos, k, v in rankings[key]:
                o.row([pos, k, num(v, 4)])
            files[f"ranking_{key}.csv"] = o.text()

    # top-N distributions
    for group, members, attr in [("type", type_members, "type"), ("university", uni_members, "uni")]:
        for m in METRICS:
            o = Out(["group", "items"] + [f"top{t}" for t in TOP_N] + [f"pct_top{t}" for t in TOP_N])
            positions = {}
            for pos, k, _ in rankings[f"units_{KEY[m]}"]:
                positions.setdefault(units[k][attr], []).append(pos)
            for g in sorted(members):
                items = len(members[g])
                counts = [sum(1 for p in positions.get(g, []) if p <= t) for t in TOP_N]
                pcts = [num(100.0 * c / items, 2) if items else "NA" for c in counts]
                o.row([g, items] + counts + pcts)
            files[f"topn_{group}_{KEY[m]}.csv"] = o.text()

    # rank shift
    def shift(name, a, b):
        keys = set(a) & set(b)
        pa = {k: p for p, k, _ in rank({k: a[k] for k in keys})}
        pb = {k: p for p, k, _ in rank({k: b[k] for k in keys})}
        ms = sum(abs(pa[k] - pb[k]) for k in keys) / len(keys) if keys else 0.0
        return [name, len(keys), num(ms, 4)]

    rs = lambda t: r_values(t, "size")
    rv = lambda t: r_values(t, "visibility")
    o = Out(["comparison", "n", "mean_shift"])
    o.row(shift("uni_internal_vs_uni_general_rs", rs(internal), rs(general)))
    o.row(shift("uni_internal_vs_uni_general_rv", rv(internal), rv(general)))
    o.row(shift("units_rs_vs_rv", rs(unit_tab), rv(unit_tab)))
    o.row(shift("types_rs_vs_rv", rs(types), rv(types)))
    o.row(shift("uni_internal_rs_vs_rv", rs(internal), rv(internal)))
    o.row(shift("uni_general_rs_vs_rv", rs(general), rv(general)))
    files["rank_shift.csv"] = o.text()

    # correlations
    populated = {t for t, m in type_members.items() if m}
    sub = lambda d, keep: {k: v for k, v in d.items() if keep(k)}
    unit_rs, unit_rv = rs(unit_tab), rv(unit_tab)
    nonzero = sorted(((k, v) for k, v in unit_rs.items() if v > 0), key=lambda kv: (-kv[1], kv[0]))
    top = {k for k, _ in nonzero[:TOP_K]}
    type_rs = sub(rs(types), lambda k: k in populated)
    type_rv = sub(rv(types), lambda k: k in populated)
    pairs = [
        ("unit", "R_s", "R_v", unit_rs, unit_rv),
        ("unit_topk", "R_s", "R_v", sub(unit_rs, lambda k: k in top), sub(unit_rv, lambda k: k in top)),
        ("type", "R_s", "R_v", type_rs, type_rv),
        ("uni_internal", "R_s", "R_v", rs(internal), rv(internal)),
        ("uni_general", "R_s", "R_v", rs(general), rv(general)),
        ("uni_general_vs_internal", "R_s_general", "R_s_internal", rs(general), rs(internal)),
        ("uni_general_vs_internal", "R_v_general", "R_v_internal", rv(general), rv(internal)),
    ]
    o = Out(["level", "x", "y", "n", "rho"])
    for level, x, y, xs, ys in pairs:
        cnt, rho = spearman(xs, ys)
        o.row([level, x, y, cnt, num(rho, 6)])
    files["correlations.csv"] = o.text()

    # PCA
    for scope, xs, ys in [("types", type_rs, type_rv), ("uni_internal", rs(internal), rv(internal)),
                          ("uni_general", rs(general), rv(general))]:
        keys, res = pca(xs, ys)
        comps = Out(["mode", "component", "loading_size", "loading_visibility", "eigenvalue", "explained_variance"])
        scores = Out(["entity", "pc1", "pc2"])
        if res:
            for c in range(2):
                v = res["components"][c]
                comps.row(["correlation", f"pc{c + 1}", num(float(v[0]), 6), num(float(v[1]), 6),
                           num(res["eigenvalues"][c], 6), num(res["explained"][c], 4)])
            for k, (a, b) in zip(keys, res["scores"]):
                scores.row([k, num(a, 6), num(b, 6)])
        files[f"pca_{scope}_components.csv"] = comps.text()
        files[f"pca_{scope}_scores.csv"] = scores.text()

    # flags
    flags = []
    for scope, tab in tables:
        for w, m in tab["degenerate"]:
            flags.append(("degenerate", scope, "*", labels[w], m, "scope total is zero"))
        for k, row in tab["rows"].items():
            for m in METRICS:
                for w, v, med, d in anomalies(row[m]["values"]):
                    flags.append(("temporal", scope, k, labels[w], m,
                                  f"{d} value={num(v, 0)} median_of_others={num(med, 2)}"))
    for k, row in unit_tab["rows"].items():
        for w, x in enumerate(row["wif"]):
            if x is not None and x > WIF_THRESHOLD:
                flags.append(("wif_screen", "units", k, labels[w], "", f"wif={num(x, 4)}"))
    for k in unis:
        for w in range(n):
            i, g = internal_series[k][w], general_series[k][w]
            if i is None or g is None:
                continue
            for m in METRICS:
                r, f = ratio(i[mi[m]], g[mi[m]])
                if f:
                    flags.append((f, "uni_internal", k, labels[w], m, f"ratio={num(r, 2)}"))
        for m in METRICS:
            r, f = acc_ratio[k][m]
            if f:
                flags.append((f, "uni_internal", k, "all", m, f"ratio={num(r, 2)}"))
    for w, s in enumerate(snaps):
        for url, reason in s["missing"].items():
            owner = next((k for k, u in units.items() if url in u["urls"]), None)
            owner = owner or next(k for k, u in unis.items() if url in u["general"])
            flags.append(("missing_record", "url", owner, labels[w], "", f"{url}: {reason}"))
    o = Out(["kind", "scope", "entity", "wave", "metric", "detail"])
    for f in sorted(flags):
        o.row(f)
    files["flags.csv"] = o.text()

    os.makedirs(out_dir, exist_ok=True)
    for name, text in sorted(files.items()):
        with open(os.path.join(out_dir, name), "w", newline="") as f:
            f.write(text)
    print(f"{len(files)} golden files written to {out_dir}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
