"""Matplotlib figures: instance/trajectory sketches and benchmark summaries.

All figures are written as SVG with a fixed hash salt and no date metadata so
that identical inputs give identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle, FancyArrow  # noqa: E402

from .model import ControlDecision, ProblemInstance  # noqa: E402

SVG_SALT = "deconflict"
ARROW_HOURS = 0.1
_RC = {"svg.hashsalt": SVG_SALT, "svg.fonttype": "none", "font.size": 9}


def _save(fig, path) -> Path:
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    meta = {"Date": None} if fmt == "svg" else None
    fig.savefig(path, format=fmt, metadata=meta)
    plt.close(fig)
    return path


def _arrow(ax, x, y, vx, vy, gid, color, **kw):
    scale = ARROW_HOURS
    art = FancyArrow(x, y, vx * scale, vy * scale, width=0.6, head_width=5.0, head_length=7.0,
                     length_includes_head=True, color=color, **kw)
    art.set_gid(gid)
    ax.add_patch(art)
    return art


def plot_instance(inst: ProblemInstance, path, controls: Sequence[ControlDecision] | None = None,
                  radius: float | None = None):
    """Draw aircraft positions with initial velocity arrows; optionally the resolved ones.

    Initial arrows carry gids ``initial-<k>``; resolved arrows ``resolved-<k>``.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        r = radius or max(s.position.norm() for s in inst.states) or 1.0
        ax.add_patch(Circle((0, 0), r, fill=False, ls=":", lw=0.8, color="0.6"))
        for k, s in enumerate(inst.states):
            x, y = s.position
            vx, vy = s.velocity_hat
            _arrow(ax, x, y, vx, vy, f"initial-{k}", "0.35", alpha=0.8)
            ax.add_patch(Circle((x, y), inst.d / 2, fill=False, lw=0.5, color="0.35"))
            ax.annotate(str(k), (x, y), xytext=(4, 4), textcoords="offset points", fontsize=7)
            if controls is not None:
                c = controls[k]
                w = complex(c.dx, c.dy) * complex(vx, vy)
                _arrow(ax, x, y, w.real, w.imag, f"resolved-{k}", "tab:red", alpha=0.9)
        lim = 1.15 * r
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
        ax.set_xlabel("x (NM)")
        ax.set_ylabel("y (NM)")
        ax.set_title(inst.name or f"{inst.n} aircraft")
        return _save(fig, path)


def plot_bench(rows: Sequence[dict], path, title: str = ""):
    """Objective and per-step time against the number of aircraft."""
    with plt.rc_context(_RC):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.6))
        xs = [int(r["n_aircraft"]) for r in rows]
        obj = [_num(r.get("objective")) for r in rows]
        t = [_num(r.get("total_time_s")) for r in rows]
        ax0.plot(xs, obj, "o-", color="tab:blue", ms=3)
        ax0.set_xlabel("aircraft")
        ax0.set_ylabel("objective")
        if any(v > 0 for v in obj):
            ax0.set_yscale("log")
        ax1.plot(xs, t, "s-", color="tab:orange", ms=3)
        ax1.set_xlabel("aircraft")
        ax1.set_ylabel("time (s)")
        for ax in (ax0, ax1):
            ax.grid(alpha=0.3)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path)


def _num(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return math.nan
