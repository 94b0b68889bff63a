"""Static SVG figures rendered next to the CSV output of a run."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _by_iteration(rows):
    out = {}
    for r in rows:
        out.setdefault(r["iteration"], []).append(r)
    return out


def save_bounds_by_stage(rows, path, iterations=None):
    """Lower/upper values versus stage for a few chosen iterations."""
    groups = _by_iteration(rows)
    ks = sorted(groups)
    if not ks:
        return
    if iterations is None:
        iterations = sorted({ks[0], ks[len(ks) // 2], ks[-1]})
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in iterations:
        if k not in groups:
            continue
        stages = [r["stage"] for r in groups[k]]
        lows = [r["lower"] for r in groups[k]]
        ups = [r["upper"] for r in groups[k]]
        if any(v is not None for v in lows):
            ax.plot(stages, lows, marker="o", ms=3, label=f"lower, k={k}")
        if any(v is not None for v in ups):
            ax.plot(stages, ups, marker="s", ms=3, ls="--", label=f"upper, k={k}")
    ax.set_xlabel("stage t")
    ax.set_ylabel("bound value")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_gap_per_stage(rows, outdir):
    """One figure per stage: gap versus iteration."""
    stages = sorted({r["stage"] for r in rows if r["gap"] is not None})
    written = []
    for t in stages:
        pts = [(r["iteration"], r["gap"]) for r in rows
               if r["stage"] == t and r["gap"] is not None]
        if not pts:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3)
        ax.set_xlabel("iteration k")
        ax.set_ylabel("upper - lower")
        ax.set_title(f"stage {t}")
        fig.tight_layout()
        path = outdir / f"gap_t{t:02d}.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def save_timings(timings, path):
    """Wall time per iteration for each side."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ks = [t["iteration"] for t in timings]
    for key, label in (("sddp_ms", "lower (cuts)"), ("minplus_ms", "upper (quadratics)")):
        vals = [t.get(key) for t in timings]
        if any(v is not None for v in vals):
            ax.plot(ks, vals, marker="o", ms=3, label=label)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("wall time [ms]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
