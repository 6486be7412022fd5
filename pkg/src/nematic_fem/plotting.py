"""Static matplotlib figures written next to the CSV/JSON results."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_energies(history, path):
    t = np.array([r.time for r in history])
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))
    ax0.plot(t, [r.kinetic for r in history], color="tab:blue")
    ax0.set_title("kinetic energy")
    ax0.set_xlabel("t")
    for name in ("total", "elastic", "penalty"):
        ax1.plot(t, [getattr(r, name) for r in history], label=name)
    ax1.set_xlabel("t")
    ax1.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_snapshot(mesh, state, path, stride=None):
    """Director (left) and intermediate velocity (right) as quiver plots."""
    xy = mesh.vertices
    if stride is None:
        stride = max(1, mesh.n_vertices // 900)
    sel = slice(None, None, stride)
    fig, axes = plt.subplots(1, 2, figsize=(10, 5))
    for ax, vec, title in ((axes[0], state.d, "director"), (axes[1], state.u_tilde, "velocity")):
        ax.quiver(xy[sel, 0], xy[sel, 1], vec[sel, 0], vec[sel, 1], pivot="mid")
        ax.set_aspect("equal")
        ax.set_title(f"{title}, t = {state.t:.3g}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_convergence(table, path):
    ks = np.array(table.ks)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, norm in zip(axes, ("L2", "H1")):
        for q in table.QUANTITIES:
            ax.loglog(ks, table.errors[f"{norm}_{q}"], marker="o", label=q)
        ax.loglog(ks, table.errors[f"{norm}_d"][0] * ks / ks[0], "k--", lw=0.8, label="O(k)")
        ax.set_xlabel("k")
        ax.set_title(f"{norm} error")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_stability(rows, path):
    ks = sorted({r["k"] for r in rows}, reverse=True)
    hs = sorted({r["h"] for r in rows}, reverse=True)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for r in rows:
        i, j = hs.index(r["h"]), ks.index(r["k"])
        ax.scatter(i, j, s=500, marker="o" if r["stable"] else "x",
                   color="tab:green" if r["stable"] else "tab:red")
        ax.annotate(f"{r['r2']:.3g}", (i, j), textcoords="offset points", xytext=(0, 16), ha="center", fontsize=8)
    ax.set_xticks(range(len(hs)), [f"{h:.4g}" for h in hs])
    ax.set_yticks(range(len(ks)), [f"{k:g}" for k in ks])
    ax.set_xlabel("h")
    ax.set_ylabel("k")
    ax.set_ylim(-0.6, len(ks) - 0.4)
    ax.set_title("stable (o) / unstable (x), labels: k / (h^1.5 eps)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
