"""Report bundle: front CSV, hypervolume table, highlight manifest, highlight DVFs and an SVG scatter."""

from __future__ import annotations

import csv
import json
from collections import OrderedDict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..imaging import rasterize_dvf, write_dvf
from .metrics import front_hypervolume, locality_probe, median_index, reference_point, select_highlights

FRONT_COLUMNS = ["approach", "repetition", "solution_id", "sim_orig", "mag_orig", "sim_reeval", "mag_reeval",
                 "dominated_flag", "highlight_role"]
HV_COLUMNS = ["approach", "repetition", "hypervolume", "n_solutions", "n_nondominated", "median",
              "ref_similarity", "ref_magnitude"]
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
ROLES = ("best_magnitude", "best_similarity", "trade_off")


def _num(v) -> str:
    return repr(float(v))


def summarize(sets, reference=None):
    """Hypervolumes, per-approach median runs and their highlights."""
    reference = reference_point([s.front() for s in sets]) if reference is None else np.asarray(reference)
    hv = [front_hypervolume(s.front(), reference) for s in sets]
    by_approach: "OrderedDict[str, list[int]]" = OrderedDict()
    for i, s in enumerate(sets):
        by_approach.setdefault(s.approach, []).append(i)
    medians, highlights = {}, {}
    for approach, idx in by_approach.items():
        chosen = idx[median_index([hv[i] for i in idx])]
        medians[approach] = chosen
        s = sets[chosen]
        objs = s.original if s.reevaluated is None else s.reevaluated
        ok = np.ones(len(s), dtype=bool) if s.valid is None else s.valid
        if np.any(ok):
            highlights[approach] = select_highlights(objs, ok)
    return reference, hv, medians, highlights


def export_report(sets, out_dir, reference=None, geometry=None, probe=None) -> dict:
    """Write the report bundle for re-evaluated approximation sets; returns the summary dict.

    ``geometry`` (a ScalarImage) enables DVF export of the highlights;
    ``probe=(center, radius)`` adds the mean DVF magnitude outside that ball.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reference, hv, medians, highlights = summarize(sets, reference)
    roles_of = {}
    for approach, trip in highlights.items():
        roles_of[medians[approach]] = trip.roles()

    write_fronts_csv(sets, out / "fronts.csv", roles_of)

    with open(out / "hypervolume.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HV_COLUMNS)
        for si, s in enumerate(sets):
            f = s.front()
            nd = len(f) - int(np.count_nonzero(s.dominated[s.valid])) if s.dominated is not None else len(f)
            w.writerow([s.approach, s.repetition, _num(hv[si]), len(s), nd, int(medians.get(s.approach) == si),
                        _num(reference[0]), _num(reference[1])])

    manifest = {"reference": [float(v) for v in reference], "approaches": {}}
    (out / "dvf").mkdir(exist_ok=True)
    for approach, trip in highlights.items():
        si = medians[approach]
        s = sets[si]
        objs = s.original if s.reevaluated is None else s.reevaluated
        entry = {"median_repetition": s.repetition, "hypervolume": hv[si], "highlights": {}}
        for role in ROLES:
            i = getattr(trip, role)
            item = {"solution_id": i, "similarity": float(objs[i, 0]), "magnitude": float(objs[i, 1])}
            if geometry is not None:
                dvf = rasterize_dvf(s.transform(i), geometry)
                name = f"dvf/{approach}_rep{s.repetition}_{role}.dvf"
                write_dvf(out / name, dvf)
                item["dvf"] = name
                if probe is not None:
                    item["outside_mean_displacement"] = locality_probe(dvf, *probe)
            entry["highlights"][role] = item
        manifest["approaches"][approach] = entry
    (out / "highlights.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "fronts.svg").write_text(render_svg(sets))
    return {"reference": reference, "hypervolumes": hv, "medians": medians, "highlights": highlights,
            "manifest": manifest}


def write_fronts_csv(sets, path, roles_of=None) -> None:
    """One row per member: original and re-evaluated objectives, dominated flag and highlight roles."""
    roles_of = roles_of or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRONT_COLUMNS)
        for si, s in enumerate(sets):
            re = s.reevaluated
            roles = roles_of.get(si, {})
            for i in range(len(s)):
                valid = s.valid is None or bool(s.valid[i])
                re_row = [_num(re[i, 0]), _num(re[i, 1])] if re is not None and valid else ["", ""]
                if not valid:
                    flag = "invalid"
                elif s.dominated is None:
                    flag = ""
                else:
                    flag = str(int(s.dominated[i]))
                w.writerow([s.approach, s.repetition, i, _num(s.original[i, 0]), _num(s.original[i, 1]),
                            *re_row, flag, "+".join(roles.get(i, []))])


def render_svg(sets, width: int = 640, height: int = 480) -> str:
    """Scatter of all fronts (re-evaluated where available); dominated members drawn lighter."""
    left, right, top, bottom = 70, 20, 20, 50
    points = []
    colors = OrderedDict()
    for s in sets:
        colors.setdefault(s.approach, PALETTE[len(colors) % len(PALETTE)])
        objs = s.original if s.reevaluated is None else s.reevaluated
        for i in range(len(s)):
            if s.valid is not None and not s.valid[i]:
                continue
            dom = bool(s.dominated[i]) if s.dominated is not None else False
            points.append((objs[i, 0], objs[i, 1], s.approach, dom))
    pw, ph = width - left - right, height - top - bottom
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle" font-size="13">similarity (SSD)</text>',
        f'<text x="16" y="{top + ph / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {top + ph / 2})">deformation magnitude</text>',
    ]
    if points:
        xs = np.array([p[0] for p in points])
        ys = np.array([p[1] for p in points])
        x0, x1 = xs.min(), xs.max()
        y0, y1 = ys.min(), ys.max()
        sx = pw / (x1 - x0) if x1 > x0 else 0.0
        sy = ph / (y1 - y0) if y1 > y0 else 0.0
        for label, value, x, anchor in ((f"{x0:.4g}", None, left, "start"), (f"{x1:.4g}", None, left + pw, "end")):
            parts.append(f'<text x="{x}" y="{top + ph + 16}" text-anchor="{anchor}" font-size="11">{label}</text>')
        parts.append(f'<text x="{left - 4}" y="{top + ph}" text-anchor="end" font-size="11">{y0:.4g}</text>')
        parts.append(f'<text x="{left - 4}" y="{top + 10}" text-anchor="end" font-size="11">{y1:.4g}</text>')
        for x, y, approach, dom in sorted(points, key=lambda p: (not p[3], p[2], p[0], p[1])):
            cx = left + (x - x0) * sx if sx else left + pw / 2
            cy = top + ph - (y - y0) * sy if sy else top + ph / 2
            opacity = "0.25" if dom else "0.9"
            parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="{colors[approach]}" '
                         f'fill-opacity="{opacity}"/>')
    for k, (approach, color) in enumerate(colors.items()):
        y = top + 14 + 16 * k
        parts.append(f'<circle cx="{left + pw - 150}" cy="{y - 4}" r="4" fill="{color}"/>')
        parts.append(f'<text x="{left + pw - 140}" y="{y}" font-size="12">{escape(approach)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def read_fronts_csv(path):
    """Rows of an exported front CSV as dicts."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def hypervolumes_from_csv(path, reference):
    """Recompute ``{(approach, repetition): hypervolume}`` from a front CSV."""
    groups: "OrderedDict[tuple, list]" = OrderedDict()
    for row in read_fronts_csv(path):
        key = (row["approach"], int(row["repetition"]))
        groups.setdefault(key, [])
        if row["sim_reeval"] and row["dominated_flag"] != "invalid":
            groups[key].append([float(row["sim_reeval"]), float(row["mag_reeval"])])
    return {k: front_hypervolume(np.array(v).reshape(-1, 2), reference) for k, v in groups.items()}


def analyze(sets, problem, out_dir, probe=None, samples=None) -> dict:
    """Re-evaluate every set on common samples, then write the report bundle."""
    from .pipeline import common_samples, reevaluate_set

    if samples is None:
        samples = common_samples(problem)
    for s in sets:
        reevaluate_set(s, problem, samples)
    return export_report(sets, out_dir, geometry=problem.target, probe=probe)
