"""Vector-graphics rendering of planar trajectory dumps."""

import io

import numpy as np

from .errors import UsageError

__all__ = ["UnsupportedDimensionError", "ellipse_points", "render_ellipses"]


class UnsupportedDimensionError(UsageError):
    """Raised when a plot is requested for a non-planar covariance."""


def ellipse_points(sigma, num=129):
    """Points of the 1-sigma level set ``{x : x^T sigma^{-1} x = 1}`` for a 2x2 SPD matrix."""
    w, U = np.linalg.eigh(sigma)
    th = np.linspace(0.0, 2.0 * np.pi, num)
    circle = np.stack([np.cos(th), np.sin(th)])
    return (U @ (np.sqrt(w)[:, None] * circle)).T


def render_ellipses(dump, stride=None, path=None):
    """Draw dashed 1-sigma ellipses every ``stride`` samples plus tracer paths.

    Parameters
    ----------
    dump : TrajectoryDump
    stride : int, optional
        Sample spacing between drawn ellipses. Defaults to a tenth of the
        grid. The last sample is always drawn.
    path : str or Path, optional
        Where to write the SVG. The text is returned either way.

    Returns
    -------
    str
        The SVG document. Metadata dates are stripped so identical dumps
        render to identical bytes.
    """
    if dump.dim != 2:
        raise UnsupportedDimensionError(f"ellipse plots need n = 2, got n = {dump.dim}")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    K = len(dump.times) - 1
    stride = max(1, K // 10) if stride is None else int(stride)
    if stride < 1:
        raise UsageError("stride must be a positive integer")
    idx = sorted(set(range(0, K + 1, stride)) | {K})

    with matplotlib.rc_context({"svg.hashsalt": "omt-holonomy", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 5))
        cmap = plt.get_cmap("viridis")
        for k in idx:
            pts = ellipse_points(dump.covariances[k])
            ax.plot(pts[:, 0], pts[:, 1], "--", lw=0.8, color=cmap(k / max(K, 1)))
        for p, path_pts in enumerate(dump.tracers):
            ax.plot(path_pts[:, 0], path_pts[:, 1], "-", lw=1.4, color="k")
            ax.plot(*path_pts[0], "o", color="tab:blue", ms=4)
            ax.plot(*path_pts[-1], "s", color="tab:red", ms=4)
        ax.set_aspect("equal")
        ax.set_title(dump.kind)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
