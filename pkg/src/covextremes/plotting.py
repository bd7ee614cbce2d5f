"""Figures written next to the record/summary files of an experiment."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy import special  # noqa: E402

from . import limit_laws  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.4),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
}
EMPIRICAL = "#3498db"
REFERENCE = "#e74c3c"


def _ecdf(ax, values, label, color=EMPIRICAL):
    x = np.sort(np.asarray(values, dtype=np.float64))
    x = x[np.isfinite(x)]
    y = np.arange(1, x.size + 1) / x.size
    ax.step(x, y, where="post", color=color, label=label)
    return x


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_z_vs_normal(z, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = _ecdf(ax, z, f"empirical Z_n (m={len(z)})")
        grid = np.linspace(min(x.min(), -4), max(x.max(), 4), 400)
        ax.plot(grid, special.ndtr(grid), color=REFERENCE, ls="--", label="standard normal")
        ax.set_xlabel("Z_n")
        ax.set_ylabel("CDF")
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_g1_vs_gumbel(g1, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = _ecdf(ax, g1, "empirical G_(1)")
        grid = np.linspace(min(x.min(), -2.5), max(x.max(), 6), 400)
        ax.plot(grid, np.exp(-np.exp(-grid)), color=REFERENCE, ls="--", label="Gumbel")
        ax.set_xlabel("largest normalized off-diagonal entry")
        ax.set_ylabel("CDF")
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_counts_vs_poisson(counts, lam, label, path) -> Path:
    c = np.asarray(counts, dtype=np.int64)
    top = max(int(c.max()), int(lam + 4 * math.sqrt(lam) + 2))
    j = np.arange(top + 1)
    observed = np.bincount(c, minlength=top + 1)[: top + 1] / c.size
    expected = np.array([limit_laws.poisson_pmf(int(v), lam) for v in j])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(j - 0.18, observed, width=0.36, color=EMPIRICAL, label="empirical")
        ax.bar(j + 0.18, expected, width=0.36, color=REFERENCE, alpha=0.7, label=f"Poisson({lam:.4g})")
        ax.set_xlabel(f"count in {label}")
        ax.set_ylabel("frequency")
        ax.legend()
        return _save(fig, path)


def plot_two_sample(a, b, label_a, label_b, path, log_x=False) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        _ecdf(ax, a, label_a)
        _ecdf(ax, b, label_b, color=REFERENCE)
        if log_x:
            ax.set_xscale("log")
        ax.set_ylabel("CDF")
        ax.legend(loc="lower right")
        return _save(fig, path)


def plot_rejection_rates(aggregates, beta, path) -> Path:
    names = [f"T{i}" for i in range(1, 5)]
    rates = np.array([aggregates[f"reject_rate_{n}"] for n in names])
    se = np.array([aggregates[f"reject_se_{n}"] for n in names])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(names, rates, yerr=2 * se, color=EMPIRICAL, capsize=4, label="rejection rate (+/- 2 SE)")
        ax.axhline(beta, color=REFERENCE, ls="--", label=f"nominal level {beta:g}")
        ax.set_ylabel("rejection frequency under the null")
        ax.legend()
        return _save(fig, path)


def render_experiment(summary, out_dir) -> list[Path]:
    """Write the figures relevant to ``summary.config.experiment`` into ``out_dir/figures``."""
    cfg = summary.config
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    exp = cfg.experiment
    z = summary.column("z_n")
    if exp in ("clt", "joint", "size", "cor28") and np.any(np.isfinite(z)):
        paths.append(plot_z_vs_normal(z[np.isfinite(z)], fig_dir / "z_ecdf.png"))
    if exp in ("pp", "joint", "size", "cor28"):
        g = summary.g_matrix()
        paths.append(plot_g1_vs_gumbel(g[:, 0], fig_dir / "g1_ecdf.png"))
    if exp in ("pp", "joint"):
        for m, u in enumerate(cfg.unions):
            lam = limit_laws.mu_measure(u)
            paths.append(plot_counts_vs_poisson(summary.counts(m), lam, str(u), fig_dir / f"counts_u{m}.png"))
    if exp == "cor28" and summary.oracle is not None:
        g = summary.g_matrix()
        o = np.asarray(summary.oracle)
        for i in range(min(g.shape[1], o.shape[1])):
            paths.append(
                plot_two_sample(g[:, i], o[:, i], f"G_({i + 1})", f"-log Gamma_{i + 1}", fig_dir / f"margin_{i + 1}.png")
            )
    if exp == "stable" and summary.oracle is not None:
        st = summary.column("stable_stat")
        paths.append(
            plot_two_sample(
                st, summary.oracle, "centred Frobenius statistic", "fourth-power oracle",
                fig_dir / "stable_ecdf.png", log_x=bool(np.all(st > 0) and np.all(summary.oracle > 0)),
            )
        )
    if exp == "size":
        paths.append(plot_rejection_rates(summary.aggregates, cfg.beta, fig_dir / "rejection_rates.png"))
    return paths
