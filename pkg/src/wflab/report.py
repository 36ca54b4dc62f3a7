"""Aggregate run records into one JSON summary and a text table."""

import json
from typing import Iterable, List


def _latest(records: Iterable[dict]) -> List[dict]:
    latest = {}
    for r in records:
        latest[(r["name"], r["config_hash"])] = r
    return [latest[k] for k in sorted(latest)]


def _ordering_rows(records: List[dict], margin: float = 0.5):
    rows = []
    scans = [r for r in records if r.get("results", {}).get("wavefront", {}).get("c_directions")]
    for i, a in enumerate(scans):
        for b in scans[i + 1:]:
            ca = a["results"]["wavefront"]["c_directions"]
            cb = b["results"]["wavefront"]["c_directions"]
            keys = sorted(set(ca) & set(cb))
            diffs = [cb[k] - ca[k] for k in keys if ca[k] is not None and cb[k] is not None]
            rows.append({"rough": a["name"], "smooth": b["name"], "matched": len(diffs),
                         "min_difference": min(diffs) if diffs else None,
                         "holds": bool(diffs) and all(d >= -margin for d in diffs), "margin": margin})
    return rows


def summarize(records: Iterable[dict]) -> dict:
    """Verdict table per config plus pairwise ordering probes between column scans.

    The summary contains no timestamps or timings, so identical inputs give
    identical bytes.
    """
    recs = _latest(records)
    table = []
    for r in recs:
        table.append({"name": r["name"], "config_hash": r["config_hash"], "status": r["status"],
                      "passed": sum(v["passed"] for v in r["verdicts"]), "total": len(r["verdicts"]),
                      "failed": [v["name"] for v in r["verdicts"] if not v["passed"]],
                      "verdicts": r["verdicts"]})
    return {"runs": table, "tau_ordering": _ordering_rows(recs),
            "all_passed": all(t["status"] == "ok" for t in table)}


def render_text(summary: dict) -> str:
    lines = ["%-16s %-10s %-20s %s" % ("config", "hash", "status", "checks")]
    for t in summary["runs"]:
        lines.append("%-16s %-10s %-20s %d/%d" % (t["name"], t["config_hash"][:8], t["status"], t["passed"],
                                                 t["total"]))
        for v in t["verdicts"]:
            lines.append("    %-34s %-4s value=%s limit=%s" % (v["name"], "ok" if v["passed"] else "FAIL",
                                                              _num(v["value"]), v["limit"]))
    if summary["tau_ordering"]:
        lines.append("")
        lines.append("tau-ordering probe (s_hat smooth >= s_hat rough - margin)")
        for row in summary["tau_ordering"]:
            lines.append("    %s vs %s: matched=%d min_diff=%s holds=%s" % (
                row["rough"], row["smooth"], row["matched"], _num(row["min_difference"]), row["holds"]))
    if not summary["runs"]:
        lines.append("(no runs)")
    return "\n".join(lines) + "\n"


def _num(v):
    return "none" if v is None else "%.4g" % v


def dumps(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
