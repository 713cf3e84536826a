"""
EvalReport rendering: machine-readable JSON and a Markdown table laid out
like the classic surrogate-benchmark table (baseline Rel.RMSE first, then
Rel.RMSE and R2 per surrogate kind as "mean (std)", NV printed literally,
best cells in bold).
"""
import logging
from pathlib import Path

from algorithms.evaluation import EvalReport
from algorithms.surrogates import KINDS
from Utils import dump_json, load_json, snake_to_title

logger = logging.getLogger(__name__)

DISPLAY_NAMES = {
    "baseline": "Baseline",
    "mlp": "Deep Neural Network",
    "svr": "Support Vector Regression",
    "forest": "Tree Regressor",
    "gbt": "Gradient Boosting",
}


def fmt_mean_std(mean, std) -> str:
    if mean is None:
        return "NV"
    return f"{mean:.3f} ({std:.3f})"


def _kinds_present(rows) -> list:
    seen = {k for r in rows for k in r.cells}
    return [k for k in KINDS if k in seen and k != "baseline"]


def _table(rows, title_extra=None) -> list:
    kinds = _kinds_present(rows)
    header = ["Algorithm", "Dataset", "Protected", "Baseline Rel.RMSE"]
    for k in kinds:
        header += [f"{DISPLAY_NAMES[k]} Rel.RMSE", f"{DISPLAY_NAMES[k]} R²"]
    header.append("Competitive")
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]

    for r in rows:
        base = r.cells.get("baseline")
        base_txt = "-" if base is None else ("NV" if base.rel_rmse_mean is None else f"{base.rel_rmse_mean:.3f}")
        dataset = f"{r.dataset} ({r.release})"
        if r.shifted_release:
            dataset = f"{r.dataset} ({r.release} → {r.shifted_release})"
        cells = [snake_to_title(r.algorithm), dataset, r.protected, base_txt]
        for k in kinds:
            c = r.cells.get(k)
            if c is None:
                cells += ["-", "-"]
                continue
            rel = fmt_mean_std(c.rel_rmse_mean, c.rel_rmse_std)
            r2 = "NV" if c.nv else fmt_mean_std(c.r2_mean, c.r2_std)
            if k in r.best:
                r2 = f"**{r2}**"
            cells += [rel, r2]
        cells.append(", ".join(DISPLAY_NAMES[k] for k in r.competitive) or "-")
        lines.append("| " + " | ".join(cells) + " |")
    return lines


def _tallies(tallies: dict) -> list:
    lines = ["| Kind | Cells | R² > 0.95 | R² > 0.8 | R² > 0.5 |", "|---|---|---|---|---|"]

    def row(name, b):
        parts = [f"{b[f'gt_{t}']} ({b[f'pct_gt_{t}']:.0f}%)" for t in (0.95, 0.8, 0.5)]
        return f"| {name} | {b['cells']} | " + " | ".join(parts) + " |"

    for kind, bucket in tallies["per_kind"].items():
        lines.append(row(DISPLAY_NAMES.get(kind, kind), bucket))
    lines.append(row("All", tallies["overall"]))
    return lines


def _notes(rows) -> list:
    out = []
    for r in rows:
        for k, c in r.cells.items():
            if c.note:
                out.append(f"- {snake_to_title(r.algorithm)} / {r.dataset} ({r.release}) / "
                           f"{DISPLAY_NAMES.get(k, k)}: {c.note}")
    return out


def render_markdown(report: EvalReport) -> str:
    target = str(report.settings.get("target", "aod")).upper()
    lines = ["# Surrogate evaluation report", ""]
    if report.benchmark:
        lines += [f"## In-distribution benchmark (target: {target})", ""]
        lines += _table(report.benchmark)
        lines += ["", "Bold: best mean R² and those within two standard deviations of it. "
                      "NV: mean R² ≤ 0.0.", ""]
        lines += ["### Threshold tallies", ""] + _tallies(report.tallies()) + [""]

    if report.shift:
        lines += [f"## Distribution shift (target: {target})", ""]
        pairs = sorted({(r.release, r.shifted_release) for r in report.shift})
        for base, shifted in pairs:
            group = [r for r in report.shift if (r.release, r.shifted_release) == (base, shifted)]
            lines += [f"### {base} → {shifted}", ""] + _table(group) + [""]

    if report.comparisons:
        lines += ["## AOD vs EOD target", "",
                  "| Algorithm | Dataset | Protected | AOD R² | EOD R² | Verdict |",
                  "|---|---|---|---|---|---|"]
        for c in report.comparisons:
            lines.append(f"| {snake_to_title(c['algorithm'])} | {c['dataset']} ({c['release']}) | "
                         f"{c['protected']} | {fmt_mean_std(c['aod_r2'], c['aod_std'])} | "
                         f"{fmt_mean_std(c['eod_r2'], c['eod_std'])} | {c['verdict']} |")
        lines.append("")

    notes = _notes(report.benchmark + report.shift)
    if notes:
        lines += ["## Notes", ""] + notes + [""]
    return "\n".join(lines).rstrip() + "\n"


def write_report(report: EvalReport, out_dir) -> tuple:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "eval_report.json"
    md_path = out_dir / "eval_report.md"
    dump_json(report.to_dict(), json_path)
    md_path.write_text(render_markdown(report), encoding="utf-8")
    logger.info("report written to %s", md_path)
    return json_path, md_path


def render_from_json(json_path, md_path=None) -> Path:
    """Re-render the Markdown report from an EvalReport JSON file alone."""
    json_path = Path(json_path)
    report = EvalReport.from_dict(load_json(json_path))
    md_path = Path(md_path) if md_path else json_path.with_suffix(".md")
    md_path.write_text(render_markdown(report), encoding="utf-8")
    return md_path
