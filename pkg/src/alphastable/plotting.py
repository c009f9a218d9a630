"""PNG figures for experiment and validation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
}


def _save(fig, path: Path) -> str:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path.name


def plot_deconv1d(exp, est, out: Path) -> list[str]:
    grid = exp.extras["grid"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.plot(grid, exp.truth, color="tab:red", label="truth")
        ax.plot(grid, est["u"], color="black", label="MAP")
        ax.plot(exp.obs_points, exp.data / exp.posterior.likelihood.op.kernel.amplitude
                / np.sqrt(np.pi / exp.posterior.likelihood.op.kernel.bandwidth),
                ".", color="0.5", ms=3, label="data (rescaled)")
        ax.set_xlabel("x")
        ax.legend(frameon=False, loc="upper left")
        if "alpha" in est or "sigma" in est:
            twin = ax.twinx()
            if "alpha" in est:
                twin.plot(grid, est["alpha"], color="tab:blue", label="stability")
            if "sigma" in est:
                twin.plot(grid, est["sigma"] / 0.051 * 1.9, color="tab:green", label="scale (rescaled)")
            twin.legend(frameon=False, loc="upper right")
        names = [_save(fig, out / "reconstruction.png")]
    return names


def _heat(ax, field, title, extent=(-1, 1, -1, 1)):
    im = ax.imshow(field, origin="lower", extent=extent, cmap="viridis")
    ax.set_title(title)
    plt.colorbar(im, ax=ax, fraction=0.046)


def plot_field(exp, est, out: Path) -> list[str]:
    key = "k" if exp.config.kind == "pde" else "u"
    extent = (0, 1, 0, 1) if exp.config.kind == "pde" else (-1, 1, -1, 1)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7, 3.2))
        _heat(axes[0], exp.truth, "truth", extent)
        _heat(axes[1], est[key], "MAP", extent)
        names = [_save(fig, out / "reconstruction.png")]
        if exp.config.kind == "pde":
            fig, ax = plt.subplots(figsize=(3.6, 3.2))
            _heat(ax, exp.extras["source"], "source", extent)
            names.append(_save(fig, out / "source.png"))
    return names


def plot_trace(trace, out: Path) -> str:
    it = [t.iteration for t in trace]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        ax.semilogy(it, [max(t.grad_norm, 1e-300) for t in trace], color="black")
        ax.set_xlabel("iteration")
        ax.set_ylabel("projected gradient")
        return _save(fig, out / "trace.png")


def plot_experiment(exp, est, out: Path, trace=None) -> list[str]:
    names = plot_deconv1d(exp, est, out) if exp.config.kind == "deconv1d" else plot_field(exp, est, out)
    if trace:
        names.append(plot_trace(trace, out))
    return names


def plot_errors(r, alpha, err, path: Path, budget: float | None = None) -> str:
    """Scatter of absolute log-density errors over the sampled (r, alpha) points."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.4))
        sc = ax.scatter(r, alpha, c=np.log10(np.maximum(err, 1e-16)), s=4, cmap="magma")
        plt.colorbar(sc, ax=ax, label="log10 |error|")
        ax.set_xlabel("r")
        ax.set_ylabel("alpha")
        title = f"max {np.max(err):.2e}"
        if budget is not None:
            title += f", budget {budget:.2e}"
        ax.set_title(title)
        return _save(fig, Path(path))
