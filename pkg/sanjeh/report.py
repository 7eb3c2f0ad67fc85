"""
report.py — Tables and figures for an audit run.

Tables (byte-deterministic):
  category_stats.csv   model_id, language, domain, category_id,
                       n_female, n_male, n_unresolved, n_failed, p
  domain_skew.csv      model_id, language, domain, n_categories, ds_gsi
  group_stats.csv      model_id, language, group, n_female, n_male, p
  language_gap.csv     model_id, domain, ds_gsi_base, ds_gsi_other, delta
  summary.json         run metadata + coverage + every table

Figures (SVG, matplotlib Agg):
  heatmap_{domain}_{language}.svg   female ratio per row × model
  ds_gsi_{language}.svg             DS-GSI grouped bars, domain × model
  ds_gsi_by_language.svg            the same bars, one panel per language

Ratios are written with 6 decimals (round-half-even); figures show the
CSV string rounded again to 2 decimals, so a figure number always equals
its CSV value after that rule.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.cm import ScalarMappable
from matplotlib.colors import LinearSegmentedColormap, Normalize
from matplotlib.patches import Rectangle

from .catalog import ACADEMIC, DomainCatalog, categories_of
from .errors import ReportError
from .metrics import CategoryStats, DomainSummary, DomainSkew, GroupStats, LanguageGap

log = logging.getLogger(__name__)

Number = Union[Fraction, float, int]

MALE_COLOR = "#2166ac"
PARITY_COLOR = "#f7f7f7"
FEMALE_COLOR = "#b2182b"
FEMALE_RATIO_CMAP = LinearSegmentedColormap.from_list(
    "female_ratio", [MALE_COLOR, PARITY_COLOR, FEMALE_COLOR])
SERIES_COLORS = ["#4c72b0", "#dd8452", "#55a868", "#c44e52",
                 "#8172b3", "#937860", "#da8bc3", "#8c8c8c"]

_SVG_RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "sanjeh-report",
    "font.family": "DejaVu Sans",
    "font.size": 9,
}

CATEGORY_HEADER = ["model_id", "language", "domain", "category_id",
                   "n_female", "n_male", "n_unresolved", "n_failed", "p"]
SKEW_HEADER = ["model_id", "language", "domain", "n_categories", "ds_gsi"]
GROUP_HEADER = ["model_id", "language", "group", "n_female", "n_male", "p"]
GAP_HEADER = ["model_id", "domain", "ds_gsi_base", "ds_gsi_other", "delta"]


# ═══════════════════════════════════════════════════════════════════════════
# Number formatting
# ═══════════════════════════════════════════════════════════════════════════

def _decimal(x: Number) -> Decimal:
    if isinstance(x, Fraction):
        with localcontext() as ctx:
            ctx.prec = 40
            return Decimal(x.numerator) / Decimal(x.denominator)
    return Decimal(repr(float(x)))


def fmt6(x: Optional[Number]) -> str:
    """Table form: 6 decimals, round-half-even; empty for undefined."""
    if x is None:
        return ""
    return str(_decimal(x).quantize(Decimal("0.000001"), rounding=ROUND_HALF_EVEN))


def fmt2(x: Optional[Number]) -> str:
    """Figure form: the 6-decimal table string rounded to 2 decimals."""
    if x is None:
        return ""
    return str(Decimal(fmt6(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


# ═══════════════════════════════════════════════════════════════════════════
# Tables
# ═══════════════════════════════════════════════════════════════════════════

def _csv_text(header: list[str], rows: Iterable[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}") from e
    return path


def category_row(s: CategoryStats) -> list[Any]:
    return [s.model_id, s.language, s.domain, s.category_id,
            s.n_female, s.n_male, s.n_unresolved, s.n_failed, fmt6(s.p)]


def skew_row(k: DomainSkew) -> list[Any]:
    return [k.model_id, k.language, k.domain, k.n_categories, fmt6(k.value)]


def group_row(g: GroupStats) -> list[Any]:
    return [g.model_id, g.language, g.group, g.n_female, g.n_male, fmt6(g.p)]


def gap_row(g: LanguageGap) -> list[Any]:
    return [g.model_id, g.domain, fmt6(g.base), fmt6(g.other), fmt6(g.delta)]


def _jsonable(value: Any) -> Any:
    if isinstance(value, Fraction):
        return fmt6(value)
    if isinstance(value, float):
        return fmt6(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def emit_tables(
    summary: DomainSummary,
    out_dir: Union[str, Path],
    *,
    groups: Sequence[GroupStats] = (),
    gaps: Sequence[LanguageGap] = (),
    meta: Optional[dict] = None,
) -> list[Path]:
    out = Path(out_dir)
    paths = [
        _write(out / "category_stats.csv",
               _csv_text(CATEGORY_HEADER, (category_row(s) for s in summary.stats))),
        _write(out / "domain_skew.csv",
               _csv_text(SKEW_HEADER, (skew_row(k) for k in summary.skews))),
        _write(out / "group_stats.csv",
               _csv_text(GROUP_HEADER, (group_row(g) for g in groups))),
        _write(out / "language_gap.csv",
               _csv_text(GAP_HEADER, (gap_row(g) for g in gaps))),
    ]
    doc = dict(meta or {})
    doc.update({
        "category_stats": [dict(zip(CATEGORY_HEADER, category_row(s))) for s in summary.stats],
        "domain_skew": [dict(zip(SKEW_HEADER, skew_row(k))) for k in summary.skews],
        "group_stats": [dict(zip(GROUP_HEADER, group_row(g))) for g in groups],
        "language_gap": [dict(zip(GAP_HEADER, gap_row(g))) for g in gaps],
        "dropped_categories": [list(d) for d in summary.dropped],
        "undefined_cells": [list(u) for u in summary.undefined],
    })
    text = json.dumps(_jsonable(doc), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    paths.append(_write(out / "summary.json", text))
    return paths


# ═══════════════════════════════════════════════════════════════════════════
# Figure specs
# ═══════════════════════════════════════════════════════════════════════════

@dataclass
class HeatmapSpec:
    rows: list[str]
    columns: list[str]
    cells: list[list[Optional[Number]]]
    language: str
    title: str = ""

    def validate(self) -> None:
        if not self.rows or not self.columns:
            raise ReportError("heatmap needs at least one row and one column")
        if len(self.cells) != len(self.rows) or any(
                len(r) != len(self.columns) for r in self.cells):
            raise ReportError(
                f"heatmap cells must be {len(self.rows)} × {len(self.columns)}")
        for row in self.cells:
            for v in row:
                if v is not None and not 0 <= v <= 1:
                    raise ReportError(f"heatmap value outside [0, 1]: {v}")

    def matrix(self) -> np.ndarray:
        """Cells as floats, NaN where missing."""
        return np.array([[np.nan if v is None else float(v) for v in row]
                         for row in self.cells], dtype=float)


@dataclass
class GroupedBarSpec:
    groups: list[str]
    series: list[str]
    values: list[list[Optional[Number]]]
    title: str = ""
    ylabel: str = "DS-GSI"

    def validate(self) -> None:
        if not self.groups or not self.series:
            raise ReportError("bar chart needs at least one group and one series")
        if len(self.values) != len(self.groups) or any(
                len(r) != len(self.series) for r in self.values):
            raise ReportError(
                f"bar values must be {len(self.groups)} × {len(self.series)}")
        for row in self.values:
            for v in row:
                if v is not None and not 0 <= v <= 1:
                    raise ReportError(f"bar value outside [0, 1]: {v}")


# ═══════════════════════════════════════════════════════════════════════════
# Rendering
# ═══════════════════════════════════════════════════════════════════════════

def _save_svg(fig, out_path: Union[str, Path]) -> Path:
    path = Path(out_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}") from e
    finally:
        plt.close(fig)
    return path


def render_heatmap(spec: HeatmapSpec, out_path: Union[str, Path]) -> Path:
    spec.validate()
    n_rows, n_cols = len(spec.rows), len(spec.columns)
    values = spec.matrix()

    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(2.2 + 1.3 * n_cols, 1.2 + 0.38 * n_rows))
        for r in range(n_rows):
            for c in range(n_cols):
                v = values[r, c]
                if np.isnan(v):
                    cell = Rectangle((c, r), 1, 1, facecolor="white",
                                     edgecolor="#9a9a9a", hatch="///", lw=0.5)
                    cell.set_gid(f"cell-{r}-{c}-missing")
                    ax.add_patch(cell)
                    continue
                cell = Rectangle((c, r), 1, 1, facecolor=FEMALE_RATIO_CMAP(v),
                                 edgecolor="white", lw=0.5)
                cell.set_gid(f"cell-{r}-{c}")
                ax.add_patch(cell)
                txt = ax.text(c + 0.5, r + 0.5, fmt2(spec.cells[r][c]),
                              ha="center", va="center",
                              color="white" if abs(v - 0.5) > 0.3 else "black")
                txt.set_gid(f"value-{r}-{c}")

        ax.set_xlim(0, n_cols)
        ax.set_ylim(n_rows, 0)
        ax.set_xticks(np.arange(n_cols) + 0.5)
        ax.set_xticklabels(spec.columns, rotation=30, ha="right")
        ax.set_yticks(np.arange(n_rows) + 0.5)
        ax.set_yticklabels(spec.rows)
        ax.tick_params(length=0)
        for side in ax.spines.values():
            side.set_visible(False)

        sm = ScalarMappable(norm=Normalize(0.0, 1.0), cmap=FEMALE_RATIO_CMAP)
        cbar = fig.colorbar(sm, ax=ax, fraction=0.05, pad=0.03)
        cbar.set_label("female ratio (0 = all male, 1 = all female)")
        ax.set_title(spec.title or f"Female ratio ({spec.language})")
        fig.tight_layout()
        return _save_svg(fig, out_path)


def _draw_bars(ax, spec: GroupedBarSpec, gid_prefix: str = "") -> None:
    n_groups, n_series = len(spec.groups), len(spec.series)
    width = 0.8 / n_series
    x = np.arange(n_groups)
    for s, name in enumerate(spec.series):
        color = SERIES_COLORS[s % len(SERIES_COLORS)]
        heights = [0.0 if spec.values[g][s] is None else float(spec.values[g][s])
                   for g in range(n_groups)]
        offsets = x - 0.4 + width * (s + 0.5)
        bars = ax.bar(offsets, heights, width=width * 0.95, color=color, label=name)
        for g, bar in enumerate(bars.patches):
            v = spec.values[g][s]
            if v is None:
                bar.set_gid(f"{gid_prefix}bar-{g}-{s}-missing")
                bar.set_hatch("///")
                continue
            bar.set_gid(f"{gid_prefix}bar-{g}-{s}")
            txt = ax.text(offsets[g], heights[g] + 0.01, fmt2(v),
                          ha="center", va="bottom", fontsize=7)
            txt.set_gid(f"{gid_prefix}barvalue-{g}-{s}")

    # fixed axis: an all-zero chart must not autoscale
    ax.set_ylim(0.0, 1.0)
    ax.set_yticks(np.linspace(0.0, 1.0, 6))
    ax.set_xticks(x)
    ax.set_xticklabels(spec.groups)
    ax.set_ylabel(spec.ylabel)
    ax.set_title(spec.title)
    ax.grid(True, axis="y", alpha=0.3)


def render_grouped_bars(spec: GroupedBarSpec, out_path: Union[str, Path]) -> Path:
    spec.validate()
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(2.0 + 1.6 * len(spec.groups), 4.0))
        _draw_bars(ax, spec)
        ax.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0), frameon=False)
        fig.tight_layout()
        return _save_svg(fig, out_path)


def render_bar_panels(panels: Sequence[tuple[str, GroupedBarSpec]],
                      out_path: Union[str, Path]) -> Path:
    """
    Several bar charts side by side on one shared y-axis, e.g. one panel
    per language.  Element ids carry the panel key: ``fa-bar-0-1``.
    """
    if not panels:
        raise ReportError("panel figure needs at least one panel")
    for _, spec in panels:
        spec.validate()
    widest = max(len(spec.groups) for _, spec in panels)
    with plt.rc_context(_SVG_RC):
        fig, axes = plt.subplots(1, len(panels), sharey=True, squeeze=False,
                                 figsize=(1.0 + (1.0 + 1.6 * widest) * len(panels), 4.0))
        for ax, (key, spec) in zip(axes[0], panels):
            _draw_bars(ax, spec, gid_prefix=f"{key}-")
        for ax in axes[0][1:]:
            ax.set_ylabel("")
        axes[0][-1].legend(loc="upper left", bbox_to_anchor=(1.0, 1.0), frameon=False)
        fig.tight_layout()
        return _save_svg(fig, out_path)


# ═══════════════════════════════════════════════════════════════════════════
# Figure assembly from a summary
# ═══════════════════════════════════════════════════════════════════════════

def heatmap_specs(
    summary: DomainSummary,
    groups: Sequence[GroupStats],
    catalog: DomainCatalog,
    models: Sequence[str],
    languages: Sequence[str],
) -> dict[tuple[str, str], HeatmapSpec]:
    """One spec per (domain, language); academic rows are the groups."""
    by_cat = {(s.model_id, s.language, s.category_id): s.p for s in summary.stats}
    by_group = {(g.model_id, g.language, g.group): g.p for g in groups}
    specs: dict[tuple[str, str], HeatmapSpec] = {}
    for language in languages:
        for domain in catalog.domains:
            if domain.id == ACADEMIC:
                row_ids = catalog.group_ids()
                rows = [catalog.group_name(g) for g in row_ids]
                cells = [[by_group.get((m, language, g)) for m in models] for g in row_ids]
            else:
                cats = categories_of(catalog, domain.id)
                rows = [c.labels.get("en", c.id) for c in cats]
                cells = [[by_cat.get((m, language, c.id)) for m in models] for c in cats]
            specs[(domain.id, language)] = HeatmapSpec(
                rows=rows, columns=list(models), cells=cells, language=language,
                title=f"Female ratio by {domain.display_names.get('en', domain.id).lower()} ({language})",
            )
    return specs


def bar_specs(
    summary: DomainSummary,
    catalog: DomainCatalog,
    models: Sequence[str],
    languages: Sequence[str],
) -> dict[str, GroupedBarSpec]:
    by_cell = {(k.model_id, k.language, k.domain): k.value for k in summary.skews}
    specs = {}
    for language in languages:
        specs[language] = GroupedBarSpec(
            groups=[d.display_names.get("en", d.id) for d in catalog.domains],
            series=list(models),
            values=[[by_cell.get((m, language, d.id)) for m in models] for d in catalog.domains],
            title=f"DS-GSI by domain ({language})",
        )
    return specs


@dataclass
class ReportBundle:
    summary: DomainSummary
    groups: list[GroupStats] = field(default_factory=list)
    gaps: list[LanguageGap] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def build_report(
    bundle: ReportBundle,
    catalog: DomainCatalog,
    models: Sequence[str],
    languages: Sequence[str],
    out_dir: Union[str, Path],
) -> list[Path]:
    """Write every table and figure for one run into ``out_dir``."""
    out = Path(out_dir)
    paths = emit_tables(bundle.summary, out, groups=bundle.groups,
                        gaps=bundle.gaps, meta=bundle.meta)
    for (domain, language), spec in heatmap_specs(
            bundle.summary, bundle.groups, catalog, models, languages).items():
        paths.append(render_heatmap(spec, out / f"heatmap_{domain}_{language}.svg"))
    bars = bar_specs(bundle.summary, catalog, models, languages)
    for language, spec in bars.items():
        paths.append(render_grouped_bars(spec, out / f"ds_gsi_{language}.svg"))
    if len(bars) > 1:
        paths.append(render_bar_panels(list(bars.items()), out / "ds_gsi_by_language.svg"))
    log.info("report: %d files in %s", len(paths), out)
    return paths
