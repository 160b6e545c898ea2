"""Result aggregation: grouped min/max/avg summary tables from solver or
validation CSVs, plus static matplotlib figures rendered next to the
delimited output."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

SOLVE_CSV_HEADER = ["instance", "method", "t_s", "nodes", "cuts",
                    "rgap_pct", "ogap_pct", "objective", "bound", "status"]

# metrics picked up for figures when present in the input schema
_FIGURE_METRICS = ("t_s", "rgap_pct", "ogap_pct", "delta_pct", "delta_alpha_pct", "coop_frac")


class ReportError(ValueError):
    pass


def read_rows(paths):
    """Rows from one or more CSVs sharing one schema; mixed schemas reject."""
    header = None
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ReportError(f"{path}: empty csv")
            if header is None:
                header = list(reader.fieldnames)
            elif list(reader.fieldnames) != header:
                raise ReportError(f"{path}: schema differs from the first file")
            rows.extend(dict(row) for row in reader)
    if not rows:
        raise ReportError("no data rows found")
    return header, rows


def _numeric_columns(header, rows):
    out = []
    for col in header:
        try:
            for row in rows:
                float(row[col])
        except (TypeError, ValueError):
            continue
        out.append(col)
    return out


def summarize(header, rows, group_by=None):
    """Per-group (min, max, avg, count) of every numeric column."""
    if group_by is not None and group_by not in header:
        raise ReportError(f"group column {group_by!r} not in schema")
    numeric = _numeric_columns(header, rows)
    groups = {}
    for row in rows:
        key = row[group_by] if group_by else "all"
        groups.setdefault(key, []).append(row)

    def sort_key(k):
        try:
            return (0, float(k))
        except ValueError:
            return (1, k)

    table = []
    for key in sorted(groups, key=sort_key):
        entry = {"group": key, "count": len(groups[key])}
        for col in numeric:
            vals = [float(r[col]) for r in groups[key]]
            entry[f"{col}_min"] = min(vals)
            entry[f"{col}_max"] = max(vals)
            entry[f"{col}_avg"] = sum(vals) / len(vals)
        table.append(entry)
    return table


def write_summary(table, path):
    cols = list(table[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for entry in table:
            writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v)
                             for k, v in entry.items()})
    return path


def render_figures(header, rows, group_by, outdir, prefix="report"):
    """Bar charts of the per-group averages for every metric present; when a
    sample-size column `n` accompanies gap columns, a gap-versus-N line plot
    is emitted instead for those metrics. Returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    table = summarize(header, rows, group_by)
    paths = []
    has_n = "n" in header
    for metric in _FIGURE_METRICS:
        if f"{metric}_avg" not in table[0]:
            continue
        fig, ax = plt.subplots(figsize=(5.2, 3.4))
        if has_n and metric.startswith("delta"):
            series = {}
            for row in rows:
                key = row[group_by] if group_by else "all"
                series.setdefault(key, []).append((float(row["n"]), float(row[metric])))
            for key, pts in sorted(series.items()):
                pts.sort()
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=str(key))
            ax.set_xlabel("sample size N")
            if len(series) > 1:
                ax.legend(fontsize=8)
        else:
            keys = [str(e["group"]) for e in table]
            ax.bar(range(len(table)), [e[f"{metric}_avg"] for e in table], color="#4878d0")
            ax.set_xticks(range(len(table)))
            ax.set_xticklabels(keys, rotation=30, ha="right", fontsize=8)
            ax.set_xlabel(group_by or "group")
        ax.set_ylabel(metric)
        ax.set_title(f"{metric} by {group_by or 'group'}")
        fig.tight_layout()
        path = os.path.join(outdir, f"{prefix}_{metric}.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)
    return paths


def solution_csv_row(instance_id, method, sol) -> dict:
    return {
        "instance": instance_id,
        "method": method,
        "t_s": f"{sol.stats.t_seconds:.4f}",
        "nodes": str(sol.stats.n_nodes),
        "cuts": str(sol.stats.n_cuts),
        "rgap_pct": f"{sol.stats.rgap_percent:.4f}",
        "ogap_pct": f"{sol.stats.ogap_percent:.4f}",
        "objective": f"{sol.objective:.10g}",
        "bound": f"{sol.bound:.10g}",
        "status": sol.status,
    }


def write_solve_csv(rows, path, append=False):
    exists = os.path.exists(path) and append
    mode = "a" if exists else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SOLVE_CSV_HEADER)
        if not exists:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path
