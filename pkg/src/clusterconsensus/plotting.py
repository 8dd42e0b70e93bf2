"""SVG figures for a simulated trajectory (states, fast norm, inter-area)."""
from __future__ import annotations

from pathlib import Path

from .dynamics import Trajectory


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed salt and no timestamp: identical inputs give identical files
    matplotlib.rcParams["svg.hashsalt"] = "clusterconsensus"
    matplotlib.rcParams["svg.fonttype"] = "path"
    fig, ax = plt.subplots(figsize=(7, 4))
    return plt, fig, ax


def _save(plt, fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_states(traj: Trajectory, sizes, path: str | Path) -> None:
    plt, fig, ax = _figure()
    start = 0
    for a, n in enumerate(sizes):
        color = f"C{a % 10}"
        for i in range(start, start + n):
            ax.plot(traj.times, traj.states[:, i], color=color, lw=0.7,
                    label=f"cluster {a}" if i == start else None)
        start += n
    ax.set_xlabel("t")
    ax.set_ylabel("x_i(t)")
    ax.set_title("node states")
    ax.legend(loc="upper right", fontsize="small")
    _save(plt, fig, Path(path))


def plot_fast(traj: Trajectory, path: str | Path) -> None:
    plt, fig, ax = _figure()
    ax.plot(traj.times, traj.ex_norm, color="C0", label="||e_x||")
    ax.set_xlabel("t")
    ax.set_ylabel("||e_x(t)||")
    ax.set_title("fast variable")
    ax.legend(loc="upper right")
    _save(plt, fig, Path(path))


def plot_inter_area(traj: Trajectory, path: str | Path) -> None:
    plt, fig, ax = _figure()
    for a in range(traj.e_y.shape[1]):
        ax.plot(traj.times, traj.e_y[:, a], color=f"C{a % 10}", label=f"e_y[{a}]")
    ax.set_xlabel("t")
    ax.set_ylabel("e_y(t)")
    ax.set_title("inter-area variable")
    ax.legend(loc="upper right", fontsize="small")
    _save(plt, fig, Path(path))


def write_all(traj: Trajectory, sizes, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    paths = [out / "states.svg", out / "fast.svg", out / "inter_area.svg"]
    # long runs: thin to ~2000 points, plots are presentation only
    stride = max(1, len(traj) // 2000)
    thin = Trajectory(
        times=traj.times[::stride], states=traj.states[::stride], y=traj.y[::stride],
        e_x=traj.e_x[::stride], e_y=traj.e_y[::stride], V_ey=traj.V_ey[::stride],
        V_ex=traj.V_ex[::stride], V=traj.V[::stride], epsilon=traj.epsilon, rate=traj.rate,
    )
    plot_states(thin, sizes, paths[0])
    plot_fast(thin, paths[1])
    plot_inter_area(thin, paths[2])
    return paths


def is_well_formed_svg(path: str | Path) -> bool:
    import xml.etree.ElementTree as ET

    try:
        root = ET.parse(path).getroot()
    except (ET.ParseError, OSError):
        return False
    return root.tag.endswith("svg") and any(el.tag.endswith("path") for el in root.iter())
