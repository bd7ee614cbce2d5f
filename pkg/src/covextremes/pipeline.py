"""End-to-end independence test on a single data matrix."""
from __future__ import annotations

import math
from typing import Optional

from . import statistics
from .cov_engine import DEFAULT_BLOCK, as_data_matrix, summarize
from .dataio import fmt_human
from .distributions import NullModel, estimate_m4, exact_m4
from .statistics import TestOutcome

__all__ = ["resolve_m4", "run_test", "format_report"]


def resolve_m4(data, m4: Optional[float] = None, model: Optional[NullModel] = None) -> tuple[float, str]:
    """Fourth moment by precedence: explicit value, then model, then plug-in."""
    if m4 is not None:
        if not (m4 >= 1.0 and math.isfinite(m4)):
            raise ValueError(f"explicit m4 must be finite and >= 1, got {m4}")
        return float(m4), "explicit"
    if model is not None:
        return exact_m4(model), "exact"
    return estimate_m4(data), "plugin"


def run_test(
    data,
    k: int,
    beta: float,
    m4: Optional[float] = None,
    model: Optional[NullModel] = None,
    block: int = DEFAULT_BLOCK,
) -> tuple[TestOutcome, str]:
    """Compute all four combined tests and a printable report."""
    x = as_data_matrix(data)
    p, n = x.shape
    d_p = statistics.compute_dp(p)
    thr = statistics.rejection_threshold(beta)
    m4_value, m4_source = resolve_m4(x, m4, model)
    s = summarize(x, k=k, d_p=d_p, block=block)
    z_n = statistics.z_statistic(s.trace_s2, n, p, m4_value)
    outcome = statistics.evaluate_tests(s.top_g, z_n, k, beta)
    outcome.extras.update(
        p=p,
        n=n,
        d_p=d_p,
        m4=m4_value,
        m4_source=m4_source,
        mu_n=statistics.mu_n(n, p, m4_value),
        sigma_n=math.sqrt(statistics.sigma_n_sq(n, p, m4_value)),
        trace_s=s.trace_s,
        trace_s2=s.trace_s2,
        g_top=s.top_g,
        top_pairs=s.top_pairs,
        threshold=thr,
    )
    return outcome, format_report(outcome)


def format_report(out: TestOutcome) -> str:
    e = out.extras
    lines = ["resolved configuration"]
    for label, value in (
        ("p", e["p"]),
        ("n", e["n"]),
        ("k", out.k),
        ("beta", out.beta),
        ("m4", e["m4"]),
        ("m4 source", e["m4_source"]),
        ("d_p", e["d_p"]),
        ("mu_n", e["mu_n"]),
        ("sigma_n", e["sigma_n"]),
        ("threshold", out.threshold),
    ):
        lines.append(f"  {label:<12}{value if isinstance(value, str) else fmt_human(value)}")
    lines.append("statistics")
    lines.append(f"  {'tr(S)':<12}{fmt_human(e['trace_s'])}")
    lines.append(f"  {'tr(S^2)':<12}{fmt_human(e['trace_s2'])}")
    lines.append(f"  {'Z_n':<12}{fmt_human(out.z_n)}    p = {fmt_human(out.p_z)}")
    i, j = e["top_pairs"][0]
    lines.append(f"  {'G_(1)':<12}{fmt_human(e['g_top'][0])}    pair ({i + 1}, {j + 1})")
    lines.append("tests")
    lines.append(f"  {'test':<6}{'statistic':>14}{'p_T':>14}{'combined':>14}  reject")
    stats_ = (out.t1, out.t2k, out.t3k, out.t4k)
    p_t = (out.p_t1, out.p_t2k, out.p_t3k, out.p_t4k)
    for idx in range(4):
        lines.append(
            f"  {'T' + str(idx + 1):<6}{fmt_human(stats_[idx]):>14}{fmt_human(p_t[idx]):>14}"
            f"{fmt_human(out.combined[idx]):>14}  {fmt_human(out.decisions[idx])}"
        )
    return "\n".join(lines) + "\n"
