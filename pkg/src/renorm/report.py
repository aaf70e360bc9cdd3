"""Optional PNG summaries of scan and asymptotics results (needs matplotlib)."""
import numpy as np

from .errors import UsageError


def _plt():
    try:
        import matplotlib
    except ImportError as e:
        raise UsageError("figures need matplotlib (pip install artifact[figures])", stage="report") from e
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def scan_figure(rows, path):
    """lambda against r, one line per (p, nu)."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    keys = sorted({(row["p"], row["nu"]) for row in rows})
    for p, nu in keys:
        pts = [(row["r"], row["lambda"]) for row in rows
               if row["p"] == p and row["nu"] == nu and row["status"] == "ok"]
        if pts:
            r, lam = np.array(pts).T
            ax.plot(r, lam, "o-", ms=3, label=f"p={p}, nu={nu:g}")
    ax.set_xlabel("r")
    ax.set_ylabel("lambda")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def asym_figure(abl, path, lo=0.01, hi=1.0):
    """S_+ and S_- on [lo, hi] for each bundle of a family."""
    plt = _plt()
    z = np.linspace(lo, hi, 400)
    fig, axs = plt.subplots(1, 2, figsize=(9, 3.6))
    for ab in abl:
        lab = f"r={ab.params.r:g}"
        axs[0].plot(z, ab.S_plus(z), label=lab)
        axs[1].plot(z, ab.S_minus(z), label=lab)
    for ax, name in zip(axs, ("S_+", "S_-")):
        ax.set_xlabel("zeta")
        ax.set_title(name)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
