"""Report figures, rendered straight to files with the Agg backend."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .device import HOUR  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_design_space(rows, path):
    """Array area against per-layer time, one marker per configuration."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        t = [r.exec_time_per_layer_hr for r in rows]
        ax.loglog(t, [r.area_pessimistic_cm2 for r in rows], "o-", label="pessimistic")
        ax.loglog(t, [r.area_optimistic_cm2 for r in rows], "s--", label="optimistic")
        for r in rows:
            ax.annotate(r.config_name, (r.exec_time_per_layer_hr, r.area_pessimistic_cm2),
                        textcoords="offset points", xytext=(4, 4), fontsize=7)
        ax.set_xlabel("execution time per layer (h)")
        ax.set_ylabel("microcell array area (cm$^2$)")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_convergence(ts: Sequence[float], errors: Sequence[float], path, slope: float | None = None):
    """Sampled-chemistry error against molecule count on log-log axes."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.loglog(ts, errors, "o", label="rms error")
        ref = errors[0] * np.sqrt(ts[0] / np.asarray(ts, dtype=float))
        ax.loglog(ts, ref, ":", color="gray", label="$t^{-1/2}$")
        if slope is not None:
            ax.set_title(f"fitted slope {slope:.3f}")
        ax.set_xlabel("molecules per droplet $t$")
        ax.set_ylabel("pre-activation error")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_trace_timeline(events, path):
    """Horizontal timeline of event kinds (hours) for a simulated layer."""
    by_kind = defaultdict(list)
    for e in events:
        by_kind[e.kind].append(e.time_s / HOUR)
    kinds = list(dict.fromkeys(e.kind for e in events))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 0.25 * len(kinds) + 1.0))
        for i, kind in enumerate(kinds):
            ax.plot(by_kind[kind], [i] * len(by_kind[kind]), "|", markersize=8)
        ax.set_yticks(range(len(kinds)))
        ax.set_yticklabels(kinds, fontsize=7)
        ax.invert_yaxis()
        ax.set_xlabel("simulated time (h)")
        return _save(fig, path)


def plot_training_curve(losses: Sequence[float], path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.plot(np.arange(1, len(losses) + 1), losses)
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        return _save(fig, path)


def plot_agreement(reports, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        labels = [f"{r.mode_a}\nvs {r.mode_b}" for r in reports]
        ax.bar(range(len(reports)), [r.agreement for r in reports])
        ax.set_xticks(range(len(reports)))
        ax.set_xticklabels(labels, fontsize=6)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("prediction agreement")
        return _save(fig, path)
