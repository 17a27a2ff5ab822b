"""
Plot service: renders figures from emitted CSV tables only
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.app.services.storage_service import StorageService  # noqa: E402

logger = logging.getLogger(__name__)


class PlotService:
    """Each method reads one or more tables back from storage and saves a PNG next to them"""

    def __init__(self, storage_service: Optional[StorageService] = None):
        self.storage = storage_service or StorageService()

    def _save(self, fig, command: str, name: str) -> Path:
        path = self.storage.artifact_path(command, name)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        logger.debug("Rendered %s", path)
        return path

    def spacing_vs_goe(self, command: str = StorageService.FOLDER_SPECTRUM) -> Path:
        table = self.storage.read_table(command, "spacing_histogram.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        width = float(np.diff(table["s"]).mean()) if len(table) > 1 else 0.1
        ax.bar(table["s"], table["density"], width=width, alpha=0.6, label="P(s)")
        ax.plot(table["s"], table["goe"], "k-", label="GOE")
        ax.set_xlabel("s")
        ax.set_ylabel("P(s)")
        ax.legend()
        return self._save(fig, command, "spacing_vs_goe.png")

    def density_of_states(self, command: str = StorageService.FOLDER_SPECTRUM) -> Path:
        table = self.storage.read_table(command, "dos.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(table["energy"], table["density"], "o-", markersize=3)
        ax.set_yscale("log")
        ax.set_xlabel("E")
        ax.set_ylabel("DOS")
        return self._save(fig, command, "dos.png")

    def entropy_scatter(self, command: str = StorageService.FOLDER_ENTANGLEMENT, cut: Optional[int] = None) -> Path:
        table = self.storage.read_table(command, "entropies.csv")
        if cut is None:
            cut = int(table["cut"].iloc[len(table) // 2])
        rows = table[table["cut"] == cut]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.scatter(rows["energy"], rows["entropy"], s=4)
        ax.set_xlabel("E")
        ax.set_ylabel(f"S at cut {cut}")
        return self._save(fig, command, f"entropy_scatter_cut{cut}.png")

    def zero_entropy_density(self, command: str = StorageService.FOLDER_ENTANGLEMENT) -> Path:
        table = self.storage.read_table(command, "separable_density.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        for state, rows in table.groupby("state"):
            ax.plot(rows["site"], rows["density"], "o-", markersize=3, label=f"state {state}")
        ax.set_xlabel("site i")
        ax.set_ylabel("<n_i>")
        if table["state"].nunique() <= 10:
            ax.legend(fontsize=7)
        return self._save(fig, command, "zero_entropy_density.png")

    def quench_observables(self, command: str = StorageService.FOLDER_QUENCH) -> List[Path]:
        trace = self.storage.read_table(command, "trace.csv")
        paths = []

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(trace["t"], trace["F"])
        ax.set_xlabel("t")
        ax.set_ylabel("F(t)")
        paths.append(self._save(fig, command, "fidelity.png"))

        entropies = self.storage.read_table(command, "entropies.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        for column in entropies.columns[1:]:
            ax.plot(entropies["t"], entropies[column], label=column)
        ax.set_xlabel("t")
        ax.set_ylabel("S(t)")
        ax.legend()
        paths.append(self._save(fig, command, "entropy.png"))

        compare = self.storage.read_table(command, "compare.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        for initial, rows in compare.groupby("initial"):
            ax.plot(rows["t"], rows["density"], label=initial)
        ax.set_xlabel("t")
        ax.set_ylabel("<n_i(t)>")
        ax.legend()
        paths.append(self._save(fig, command, "density.png"))
        return paths

    def density_heatmap(self, L: int, command: str = StorageService.FOLDER_DW) -> Path:
        trace = self.storage.read_table(command, f"trace_L{L}.csv")
        columns = [f"n_{i}" for i in range(1, L + 1)]
        fig, ax = plt.subplots(figsize=(6, 4))
        mesh = ax.pcolormesh(
            np.arange(1, L + 2) - 0.5, self._edges(trace["t"].to_numpy()), trace[columns].to_numpy(), shading="flat"
        )
        ax.set_yscale("log")
        ax.set_xlabel("site i")
        ax.set_ylabel("t")
        fig.colorbar(mesh, ax=ax, label="<n_i(t)>")
        return self._save(fig, command, f"density_L{L}.png")

    @staticmethod
    def _edges(times: np.ndarray) -> np.ndarray:
        """Geometric cell edges around log-spaced samples."""
        logs = np.log(times)
        mid = 0.5 * (logs[1:] + logs[:-1])
        return np.exp(np.concatenate([[2 * logs[0] - mid[0]], mid, [2 * logs[-1] - mid[-1]]]))

    def transport(self, Ls: Sequence[int], command: str = StorageService.FOLDER_DW) -> List[Path]:
        paths = []
        fig_r, ax_r = plt.subplots(figsize=(6, 4))
        fig_z, ax_z = plt.subplots(figsize=(6, 4))
        for L in Ls:
            trace = self.storage.read_table(command, f"trace_L{L}.csv")
            ax_r.loglog(trace["t"], trace["R"], label=f"L={L}")
            exponent = self.storage.read_table(command, f"exponent_L{L}.csv")
            ax_z.semilogx(exponent["t"], exponent["inv_z"], label=f"L={L}")
        ax_r.set_xlabel("t")
        ax_r.set_ylabel("R(t)")
        ax_r.legend()
        ax_z.set_xlabel("t")
        ax_z.set_ylabel("1/z")
        ax_z.legend()
        paths.append(self._save(fig_r, command, "displacement.png"))
        paths.append(self._save(fig_z, command, "exponent.png"))

        fig, ax = plt.subplots(figsize=(6, 4))
        for L in Ls:
            fronts = self.storage.read_table(command, f"fronts_L{L}.csv")
            for epsilon, rows in fronts.groupby("epsilon"):
                ax.semilogx(rows["t"], rows["inv_z"], label=f"L={L}, eps={epsilon:.0e}")
        ax.set_xlabel("t")
        ax.set_ylabel("1/z_r")
        ax.legend(fontsize=6)
        paths.append(self._save(fig, command, "fronts.png"))

        last = self.storage.read_table(command, "last_site.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        for L, rows in last.groupby("L"):
            ax.semilogx(rows["t"], rows["density"], label=f"L={L}")
        ax.set_xlabel("t")
        ax.set_ylabel("<n_L(t)>")
        ax.legend()
        paths.append(self._save(fig, command, "last_site.png"))

        profiles = self.storage.read_table(command, "profiles.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        for L, rows in profiles.groupby("L"):
            Np = float(rows["Np"].iloc[0])
            ax.plot(rows["site"] / Np, rows["late"], "o", markersize=3, label=f"L={L}")
            ax.plot(rows["site"] / Np, rows["infinite_temperature"], "k--", linewidth=0.8)
        ax.set_xlabel("i / Np")
        ax.set_ylabel("late <n_i>")
        ax.legend()
        paths.append(self._save(fig, command, "profiles.png"))
        return paths

    def automaton_displacement(self, command: str = StorageService.FOLDER_AUTOMATON) -> Path:
        table = self.storage.read_table(command, "displacement.csv")
        table = table[table["t"] > 0]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogx(table["t"], table["R"])
        ax.set_xlabel("t (layers)")
        ax.set_ylabel("R(t)")
        return self._save(fig, command, "displacement.png")
