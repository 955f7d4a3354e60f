"""SVG plots of a run's monitor series."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import MONITORS, read_monitors  # noqa: E402

FAMILIES = {
    "energy.svg": ("Energies", ["L2_energy", "grad_L2", "L4_fourth_power", "Hm_norm"]),
    "besov.svg": ("Besov norms", ["besov_32", "besov_72"]),
    "phipsi.svg": ("Linear-part functionals", ["phi_t", "psi_t"]),
    "blowup.svg": ("Blow-up integrand", ["blowup_integrand"]),
}


def plot_run(run_dir: str | Path) -> list[Path]:
    """Write one SVG per monitor family into ``run_dir``; returns the paths."""
    run_dir = Path(run_dir)
    mon = read_monitors(run_dir / MONITORS)
    written = []
    with plt.rc_context({"svg.hashsalt": "llb", "svg.fonttype": "path"}):
        for name, (title, cols) in FAMILIES.items():
            fig, ax = plt.subplots(figsize=(6, 4))
            for col in cols:
                y = mon[col]
                if np.all(np.isnan(y)):
                    continue
                ax.plot(mon["t"], y, label=col, marker="." if y.size < 20 else None)
            ax.set_xlabel("t")
            ax.set_title(title)
            if ax.lines:
                ax.legend(loc="best")
            path = run_dir / name
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
