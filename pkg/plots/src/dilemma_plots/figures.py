"""The six figure kinds rendered from run artifacts.

All smoothing happens here at plot time; the data files are never
modified. The Agg backend is forced so rendering is headless and
byte-deterministic for identical inputs.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt
import numpy as np

from .io import (SchemaMismatch, agent_columns, read_network,
                 read_strategies, read_table, require)

OUTCOME_LABELS = [("mc_pct", "mutual cooperation", "#2a7fff"),
                  ("ex_pct", "exploitation", "#ff7f0e"),
                  ("de_pct", "deception", "#2ca02c"),
                  ("md_pct", "mutual defection", "#d62728")]
STRATEGY_COLORS = {"ALLC": "#2a7fff", "ALLD": "#d62728",
                   "TFT": "#2ca02c", "REVTFT": "#ff7f0e", "NA": "#999999"}


def smooth(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with edge windows shrunk to the data.

    NaN entries are excluded from each window's average; a window that is
    all NaN stays NaN. window=1 returns the values unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if window <= 1 or len(x) == 0:
        return x.copy()
    valid = ~np.isnan(x)
    c1 = np.cumsum(np.where(valid, x, 0.0))
    c0 = np.cumsum(valid)
    t = np.arange(len(x))
    lo = np.clip(t - (window - 1) // 2, 0, None)
    hi = np.clip(t + window // 2, None, len(x) - 1)
    total = c1[hi] - np.where(lo > 0, c1[lo - 1], 0.0)
    count = c0[hi] - np.where(lo > 0, c0[lo - 1], 0)
    with np.errstate(invalid="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def _band(ax, episode, mean, std, color, label):
    ax.plot(episode, mean, color=color, label=label, linewidth=1.2)
    ax.fill_between(episode, mean - std, mean + std, color=color, alpha=0.15,
                    linewidth=0)


def _phase_markers(ax, episode, curves):
    """Dashed lines at the starts visible in the outcome curves: the
    defection and exploitation peaks and the final cooperation takeover."""
    marks = []
    if np.isfinite(curves["md_pct"]).any():
        marks.append(episode[int(np.nanargmax(curves["md_pct"]))])
    if np.isfinite(curves["ex_pct"]).any():
        marks.append(episode[int(np.nanargmax(curves["ex_pct"]))])
    ahead = curves["mc_pct"] > curves["ex_pct"]
    if ahead.size and ahead[-1]:
        # first episode of the crossing that persists to the end
        start = np.flatnonzero(~ahead)
        marks.append(episode[int(start[-1]) + 1 if start.size else 0])
    for x in marks:
        ax.axvline(x, color="#555555", linestyle="--", linewidth=0.8,
                   alpha=0.7)


def render_outcomes(in_dir: Path, out: Path, window: int) -> None:
    table = read_table(in_dir / "aggregate.csv")
    needed = ["episode"] + [f"{c}_{s}" for c, _, _ in OUTCOME_LABELS
                            for s in ("mean", "std")]
    require(table, needed, "aggregate.csv")
    episode = table["episode"]
    fig, ax = plt.subplots(figsize=(7, 4))
    curves = {}
    for col, label, color in OUTCOME_LABELS:
        mean = smooth(table[f"{col}_mean"], window)
        std = smooth(table[f"{col}_std"], window)
        curves[col] = mean
        _band(ax, episode, mean, std, color, label)
    _phase_markers(ax, episode, curves)
    ax.set_xlabel("episode")
    ax.set_ylabel("share of games")
    ax.set_ylim(0, 1)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)


def render_accuracy(in_dir: Path, out: Path, window: int) -> None:
    table = read_table(in_dir / "aggregate.csv")
    require(table, ["episode", "sel_acc_mean", "sel_acc_std"], "aggregate.csv")
    fig, ax = plt.subplots(figsize=(7, 4))
    _band(ax, table["episode"], smooth(table["sel_acc_mean"], window),
          smooth(table["sel_acc_std"], window), "#2a7fff",
          "selected partner cooperated last")
    ax.set_xlabel("episode")
    ax.set_ylabel("fraction of selections")
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)


def render_strategies(in_dir: Path, out: Path, window: int) -> None:
    """Box plots of per-strategy agent counts across seeds at four sample
    points along the run."""
    paths = sorted(in_dir.glob("seed_*/metrics.csv"))
    if not paths:
        raise FileNotFoundError(f"no seed_*/metrics.csv under {in_dir}")
    counts = {name: [] for name in ("n_allc", "n_alld", "n_tft", "n_revtft")}
    episode = None
    for path in paths:
        table = read_table(path)
        require(table, ["episode", *counts], f"{path.parent.name}/metrics.csv")
        episode = table["episode"]
        for name in counts:
            counts[name].append(smooth(table[name], window))
    samples = [int(round(f * (len(episode) - 1)))
               for f in (0.125, 0.375, 0.625, 0.875)]
    fig, ax = plt.subplots(figsize=(8, 4))
    labels = [("n_allc", "ALLC"), ("n_alld", "ALLD"),
              ("n_tft", "TFT"), ("n_revtft", "REVTFT")]
    for k, (col, label) in enumerate(labels):
        data = [[run[i] for run in counts[col]] for i in samples]
        box = ax.boxplot(data, positions=np.arange(len(samples)) * 5 + k,
                         widths=0.8, patch_artist=True,
                         medianprops={"color": "black"})
        for patch in box["boxes"]:
            patch.set_facecolor(STRATEGY_COLORS[label])
            patch.set_alpha(0.7)
    ax.set_xticks(np.arange(len(samples)) * 5 + 1.5)
    ax.set_xticklabels([f"ep {int(episode[i])}" for i in samples])
    ax.set_ylabel("agents using strategy")
    handles = [plt.Rectangle((0, 0), 1, 1, facecolor=STRATEGY_COLORS[l],
                             alpha=0.7) for _, l in labels]
    ax.legend(handles, [l for _, l in labels], fontsize=8, loc="upper left")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)


def render_per_agent(in_dir: Path, out: Path, window: int) -> None:
    """Selection counts and rewards per agent over the final window,
    colored by each agent's final strategy."""
    table = read_table(in_dir / "metrics.csv")
    require(table, ["episode"], "metrics.csv")
    selections = agent_columns(table, "selcount_agent_", "metrics.csv")
    rewards = agent_columns(table, "reward_agent_", "metrics.csv")
    _, strat_rows = read_strategies(in_dir / "strategies.csv")
    final = strat_rows[-1] if strat_rows else ["NA"] * selections.shape[1]
    span = min(window, selections.shape[0]) or 1
    colors = [STRATEGY_COLORS.get(s, "#999999") for s in final]
    agents = np.arange(selections.shape[1])
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    top.bar(agents, selections[-span:].mean(axis=0), color=colors)
    top.set_ylabel("times selected")
    bottom.bar(agents, rewards[-span:].mean(axis=0), color=colors)
    bottom.set_ylabel("reward per episode")
    bottom.set_xlabel("agent")
    seen = dict(zip(final, colors))
    handles = [plt.Rectangle((0, 0), 1, 1, facecolor=c) for c in seen.values()]
    top.legend(handles, list(seen), fontsize=8, loc="upper right")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)


def render_network(in_dir: Path, out: Path, window: int) -> None:
    path = in_dir if in_dir.suffix == ".json" else in_dir / "network.json"
    data = read_network(path)
    pos = {n["id"]: n["pos"] for n in data["nodes"]}
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    w_max = max((e["w"] for e in data["edges"]), default=1)
    for edge in data["edges"]:
        (x0, y0), (x1, y1) = pos[edge["from"]], pos[edge["to"]]
        ax.plot([x0, x1], [y0, y1], color="#888888",
                linewidth=0.4 + 1.6 * edge["w"] / w_max,
                alpha=0.25 + 0.5 * edge["w"] / w_max, zorder=1)
    for node in data["nodes"]:
        x, y = node["pos"]
        ax.scatter([x], [y], s=120 + 900 * node["centrality"],
                   color=STRATEGY_COLORS.get(node["strategy"], "#999999"),
                   edgecolors="black", linewidths=0.5, zorder=2)
        ax.annotate(str(node["id"]), (x, y), ha="center", va="center",
                    fontsize=7, zorder=3)
    seen = sorted({n["strategy"] for n in data["nodes"]})
    handles = [plt.Line2D([], [], marker="o", linestyle="",
                          color=STRATEGY_COLORS.get(s, "#999999")) for s in seen]
    ax.legend(handles, seen, fontsize=8, loc="upper right")
    ax.set_title(f"episode {data['episode']}")
    ax.set_xlim(-0.65, 0.65)
    ax.set_ylim(-0.65, 0.65)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)


def render_sweep(in_dir: Path, out: Path, window: int) -> None:
    """Mutual-cooperation share overlaid across the sweep's settings."""
    runs = sorted(p for p in in_dir.iterdir()
                  if p.is_dir() and (p / "aggregate.csv").exists())
    if not runs:
        raise FileNotFoundError(f"no <setting>/aggregate.csv under {in_dir}")
    fig, ax = plt.subplots(figsize=(7, 4))
    for run in runs:
        table = read_table(run / "aggregate.csv")
        require(table, ["episode", "mc_pct_mean"],
                f"{run.name}/aggregate.csv")
        ax.plot(table["episode"], smooth(table["mc_pct_mean"], window),
                label=run.name, linewidth=1.2)
    ax.set_xlabel("episode")
    ax.set_ylabel("mutual cooperation share")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)


RENDERERS = {
    "outcomes": render_outcomes,
    "accuracy": render_accuracy,
    "strategies": render_strategies,
    "per-agent": render_per_agent,
    "network": render_network,
    "sweep": render_sweep,
}
