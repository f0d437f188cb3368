"""Figure rendering. One deterministic file per FigureSpec."""

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .tables import SchemaError, check_highlight, load_table

# role-based palette: predictive effects in red, the assignment-side
# roles in blue shades from light (instrument) to dark (prognostic)
ROLE_COLORS = {
    "predictive": "#d62728",
    "instrument": "#9ecae1",
    "confounder": "#1f77b4",
    "prognostic": "#08519c",
}
NEUTRAL = "#8c8c8c"

_RC = {
    "svg.hashsalt": "plotkit",
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.titlesize": 10.0,
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "path.simplify": False,
}


def _color(label, highlight):
    role = highlight.get(label)
    return ROLE_COLORS[role] if role is not None else NEUTRAL


def _save(fig, spec):
    if spec.format == "svg":
        fig.savefig(spec.output, format="svg", metadata={"Date": None})
    else:
        fig.savefig(spec.output, format="png")
    plt.close(fig)


def _style_boxes(artists, colors):
    for box, color in zip(artists["boxes"], colors):
        box.set_color(color)
    for k, median in enumerate(artists["medians"]):
        median.set_color(colors[k])
    for k, color in enumerate(colors):
        for part in ("whiskers", "caps"):
            artists[part][2 * k].set_color(color)
            artists[part][2 * k + 1].set_color(color)
    for flier, color in zip(artists["fliers"], colors):
        flier.set(marker="o", markersize=2.5, markerfacecolor="none",
                  markeredgecolor=color)


def _grouped(table, key_cols, value_col):
    """Map key tuple -> list of values, keys in first-appearance order."""
    groups = {}
    keys = [table.column(c) for c in key_cols]
    for i, v in enumerate(table.column(value_col)):
        key = tuple(col[i] for col in keys)
        groups.setdefault(key, []).append(v)
    return groups


def render_importance_box(spec):
    """Per-adjustment boxplots of per-run permutation importance."""
    table = load_table(spec.input, "importance_box")
    check_highlight(table, spec.highlight, "variable")
    adjustments = table.distinct("adjustment")
    variables = table.distinct("variable")
    groups = _grouped(table, ("adjustment", "variable"),
                      "permutation_importance")
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(
            1, len(adjustments), sharey=True,
            figsize=(2.2 + 1.9 * len(adjustments), 3.4), squeeze=False)
        colors = [_color(v, spec.highlight) for v in variables]
        for ax, adj in zip(axes[0], adjustments):
            data = [groups.get((adj, v), [float("nan")]) for v in variables]
            artists = ax.boxplot(data, widths=0.6, tick_labels=variables)
            _style_boxes(artists, colors)
            ax.axhline(0.0, color="#bbbbbb", lw=0.8, zorder=0)
            ax.set_title(adj)
            ax.tick_params(axis="x", rotation=90)
        axes[0][0].set_ylabel("permutation importance")
        if spec.title:
            fig.suptitle(spec.title)
        fig.tight_layout()
        _save(fig, spec)


def render_accuracy_panel(spec):
    """Bias, variance and MSE of the predicted effect, per adjustment."""
    table = load_table(spec.input, "accuracy_panel")
    check_highlight(table, spec.highlight, "adjustment")
    adjustments = table.distinct("adjustment")
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(
            1, 3, figsize=(2.0 + 1.6 * len(adjustments), 3.2), squeeze=False)
        colors = [_color(a, spec.highlight) for a in adjustments]
        for ax, metric in zip(axes[0], ("bias", "variance", "mse")):
            groups = _grouped(table, ("adjustment",), metric)
            data = [groups[(a,)] for a in adjustments]
            artists = ax.boxplot(data, widths=0.6, tick_labels=adjustments)
            _style_boxes(artists, colors)
            if metric == "bias":
                ax.axhline(0.0, color="#bbbbbb", lw=0.8, zorder=0)
            ax.set_title(metric)
            ax.tick_params(axis="x", rotation=90)
        if spec.title:
            fig.suptitle(spec.title)
        fig.tight_layout()
        _save(fig, spec)


def render_balance_dots(spec):
    """Standardized differences before and after weighting, per variable."""
    table = load_table(spec.input, "balance_dots")
    check_highlight(table, spec.highlight, "variable")
    variables = table.distinct("variable")
    raw = dict(zip(table.column("variable"), table.column("raw_std_diff")))
    wtd = dict(zip(table.column("variable"),
                   table.column("weighted_std_diff")))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(
            figsize=(4.6, 1.2 + 0.28 * len(variables)))
        ys = range(len(variables), 0, -1)
        for y, var in zip(ys, variables):
            color = _color(var, spec.highlight)
            if not math.isnan(raw[var]):
                ax.plot(raw[var], y, marker="o", markerfacecolor="none",
                        markeredgecolor=color, linestyle="none")
            if not math.isnan(wtd[var]):
                ax.plot(wtd[var], y, marker="o", color=color,
                        linestyle="none")
        for x, style in ((0.0, "-"), (-0.1, "--"), (0.1, "--")):
            ax.axvline(x, color="#bbbbbb", lw=0.8, linestyle=style, zorder=0)
        ax.set_yticks(list(ys), labels=variables)
        ax.set_xlabel("standardized difference (open: raw, filled: weighted)")
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        _save(fig, spec)


def render_pdp_curve(spec):
    """Partial-dependence curves of the predicted treatment effect."""
    table = load_table(spec.input, "pdp_curve")
    check_highlight(table, spec.highlight, "variable")
    variables = table.distinct("variable")
    groups_x = _grouped(table, ("variable",), "value")
    groups_y = _grouped(table, ("variable",), "mean_ite")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.4, 3.2))
        for var in variables:
            ax.plot(groups_x[(var,)], groups_y[(var,)], marker="o",
                    markersize=3, color=_color(var, spec.highlight),
                    label=var)
        ax.set_xlabel("biomarker value")
        ax.set_ylabel("mean predicted treatment effect")
        if len(variables) > 1:
            ax.legend(frameon=False)
        elif variables:
            ax.set_title(spec.title or variables[0])
        if spec.title and len(variables) > 1:
            ax.set_title(spec.title)
        fig.tight_layout()
        _save(fig, spec)


RENDERERS = {
    "importance_box": render_importance_box,
    "accuracy_panel": render_accuracy_panel,
    "balance_dots": render_balance_dots,
    "pdp_curve": render_pdp_curve,
}


def render(spec):
    """Render one figure; returns the output path for convenience."""
    RENDERERS[spec.kind](spec)
    return spec.output
