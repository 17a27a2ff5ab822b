"""
Controller for the batch commands: runs services and writes artifacts
"""

import logging
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from src.app.exceptions import ConfigError
from src.app.models.dynamics_model import ObservableTrace
from src.app.models.lattice_model import ModelSpec, SectorBasis
from src.app.schemas.result_schema import (
    AutomatonSummary,
    CollapseSummary,
    DwRecord,
    DwSummary,
    EntanglementSummary,
    FragmentationSummary,
    GroundStateSummary,
    ModelSummary,
    QuenchSummary,
    SeparableRecord,
    SpectrumSummary,
)
from src.app.schemas.run_config_schema import RunConfig
from src.app.services.automaton_service import AutomatonService
from src.app.services.basis_service import BasisService
from src.app.services.dynamics_service import DynamicsService
from src.app.services.entanglement_service import SUPPORT_ATOL, EntanglementService, support_mask
from src.app.services.fitting_service import InsufficientStatisticsError
from src.app.services.fragmentation_service import FragmentationService
from src.app.services.hamiltonian_service import HamiltonianService
from src.app.services.plot_service import PlotService
from src.app.services.spectral_service import SpectralService, goe_pdf
from src.app.services.storage_service import StorageService

logger = logging.getLogger(__name__)


class SimulationController:
    """Controller behind the command-line subcommands"""

    def __init__(self, storage_service: Optional[StorageService] = None, n_jobs: int = 1):
        self.storage = storage_service or StorageService()
        self.plots = PlotService(self.storage)
        self.basis_service = BasisService()
        self.hamiltonian_service = HamiltonianService(n_jobs=n_jobs)
        self.fragmentation_service = FragmentationService(self.basis_service, self.hamiltonian_service)
        self.spectral_service = SpectralService(self.hamiltonian_service)
        self.entanglement_service = EntanglementService(
            self.fragmentation_service, self.spectral_service, n_jobs=n_jobs
        )
        self.dynamics_service = DynamicsService(self.hamiltonian_service, self.entanglement_service)

    # Shared helpers

    @staticmethod
    def _model_summary(spec: ModelSpec, basis: SectorBasis) -> ModelSummary:
        return ModelSummary(r=spec.r, t=list(spec.t), L=basis.L, Np=basis.Np, dim=len(basis))

    @staticmethod
    def _check_cuts(cuts: Iterable[int], L: int, what: str) -> List[int]:
        cuts = list(cuts)
        bad = [c for c in cuts if not 1 <= c < L]
        if bad:
            raise ConfigError(f"{what}: cuts {bad} outside 1..{L - 1}")
        return cuts

    def _sector(self, config: RunConfig, Np: Optional[int] = None):
        spec = config.model.to_spec()
        Np = Np if Np is not None else config.geometry.Np
        L = config.resolved_L(Np)
        if Np > L:
            raise ConfigError(f"geometry: Np={Np} exceeds L={L}")
        basis = self.fragmentation_service.largest_sector(L, Np, spec)
        H = self.hamiltonian_service.build_hamiltonian(basis, spec)
        return spec, basis, H

    @staticmethod
    def _trace_frame(trace: ObservableTrace) -> pd.DataFrame:
        frame = pd.DataFrame({"t": trace.times})
        for i in range(1, trace.L + 1):
            frame[f"n_{i}"] = trace.density(i)
        frame["F"] = trace.fidelity
        frame["R"] = trace.displacement
        frame["norm"] = trace.norms
        frame["energy"] = trace.energies
        return frame

    # Commands

    def cmd_spectrum(self, config: RunConfig) -> SpectrumSummary:
        """Spectrum, P(s) vs GOE, density of states, zero modes and the ground state"""
        command = StorageService.FOLDER_SPECTRUM
        analysis = config.analysis
        spec, basis, H = self._sector(config)
        es = self.spectral_service.diagonalize(H, basis)

        histogram = self.spectral_service.level_spacings(
            es, window=analysis.energy_window, unfold_degree=analysis.unfold_degree, bins=analysis.spacing_bins
        )
        stability = self.spectral_service.unfolding_stability(
            es, window=analysis.energy_window, degrees=analysis.unfold_degrees
        )
        comparison = self.spectral_service.compare_windows(
            es, window=analysis.energy_window, unfold_degree=analysis.unfold_degree
        )
        dos = self.spectral_service.density_of_states(es, bins=analysis.dos_bins)
        bound = self.fragmentation_service.zero_mode_lower_bound(basis)
        if dos.zero_modes < bound:
            logger.warning("Zero modes %d below the parity bound %d", dos.zero_modes, bound)

        ground = self.spectral_service.ground_state_report(es)
        decay = None
        if 2 * basis.Np + 2 < basis.L:
            try:
                decay = self.spectral_service.density_decay_fit(ground.density, 2 * basis.Np + 1)
            except InsufficientStatisticsError as e:
                logger.warning("No ground-state decay fit: %s", e)

        self.storage.write_config(command, config)
        self.storage.write_table(
            command, "spectrum.csv", pd.DataFrame({"index": np.arange(1, es.dim + 1), "energy": es.energies})
        )
        centers = histogram.centers
        self.storage.write_table(
            command,
            "spacing_histogram.csv",
            pd.DataFrame({"s": centers, "density": histogram.density, "goe": goe_pdf(centers)}),
        )
        self.storage.write_table(
            command,
            "dos.csv",
            pd.DataFrame(
                {"energy": 0.5 * (dos.edges[1:] + dos.edges[:-1]), "density": dos.density, "count": dos.counts}
            ),
        )
        self.storage.write_table(
            command, "ground_state.csv", pd.DataFrame({"site": np.arange(1, basis.L + 1), "density": ground.density})
        )
        self.storage.write_table(
            command, "unfolding.csv", pd.DataFrame({"degree": list(stability), "ks": list(stability.values())})
        )

        summary = SpectrumSummary(
            model=self._model_summary(spec, basis),
            window=histogram.window,
            n_levels=histogram.n_levels,
            unfold_degree=histogram.unfold_degree,
            ks_distance=histogram.ks_distance,
            unfolding_stability=stability,
            window_comparison=comparison,
            zero_modes=dos.zero_modes,
            parity_bound=bound,
            tol_zero=dos.tol_zero,
            ground_state=GroundStateSummary(
                energy=ground.energy,
                gap=ground.gap,
                degenerate=ground.degenerate,
                half_cut=ground.half_cut,
                half_cut_entropy=ground.half_cut_entropy,
                decay=decay,
            ),
        )
        self.storage.write_summary(command, "summary.json", summary)
        self.plots.spacing_vs_goe(command)
        self.plots.density_of_states(command)
        logger.info("spectrum: KS %.4f, %d zero modes (bound %d)", summary.ks_distance, dos.zero_modes, bound)
        return summary

    def cmd_entanglement_scan(self, config: RunConfig) -> EntanglementSummary:
        """Entropy scatter per cut, zero-entropy census and separable eigenstates"""
        command = StorageService.FOLDER_ENTANGLEMENT
        analysis = config.analysis
        spec, basis, H = self._sector(config)
        cuts = self._check_cuts(analysis.cuts or range(1, basis.L), basis.L, "analysis.cuts")
        es = self.spectral_service.diagonalize(H, basis)
        census = self.entanglement_service.zero_entropy_scan(es, tol=analysis.zero_entropy_tol, cuts=cuts)

        table = self.entanglement_service.entropy_table(es.vectors, basis, cuts)
        scatter = pd.DataFrame(
            {
                "eigenstate": np.repeat(np.arange(1, es.dim + 1), len(cuts)),
                "energy": np.repeat(es.energies, len(cuts)),
                "cut": np.tile(cuts, es.dim),
                "entropy": table.ravel(),
            }
        )

        occupations = BasisService.occupations(basis).astype(np.float64)
        records, densities = [], []
        for k, (x, energy) in enumerate(zip(census.representatives, census.representative_energies), start=1):
            described = self.entanglement_service.describe_separable(x, basis, spec)
            keep = np.abs(x) > SUPPORT_ATOL
            records.append(
                SeparableRecord(
                    m=described.m if described else None,
                    ell=described.ell if described else None,
                    q=described.q if described else None,
                    energy=energy,
                    residual=described.residual if described else None,
                    zero_cuts=[
                        c
                        for c in census.cuts
                        if self.entanglement_service.schmidt_cut(x, basis, c).entropy < census.tol
                    ],
                    support_mask=hex(support_mask(x)),
                    support=np.asarray(basis.bitstrings())[keep].tolist(),
                )
            )
            densities.append(
                pd.DataFrame({"state": k, "site": np.arange(1, basis.L + 1), "density": (np.abs(x) ** 2) @ occupations})
            )

        self.storage.write_config(command, config)
        self.storage.write_table(command, "entropies.csv", scatter)
        self.storage.write_table(
            command,
            "zero_entropy_counts.csv",
            pd.DataFrame(
                {
                    "cut": census.cuts,
                    "raw_count": [census.raw_counts[c] for c in census.cuts],
                    "count": [census.counts[c] for c in census.cuts],
                }
            ),
        )
        summary = EntanglementSummary(
            model=self._model_summary(spec, basis),
            tol=census.tol,
            cuts=census.cuts,
            trivial_cuts=census.trivial_cuts,
            raw_counts=census.raw_counts,
            counts=census.counts,
            raw_total=census.raw_total,
            total=census.total,
            raw_support_size=census.raw_support_size,
            support_size=census.support_size,
            separable=records,
        )
        self.storage.write_summary(command, "separable.json", summary)

        self.plots.entropy_scatter(command, cut=analysis.cuts[0] if analysis.cuts else basis.L // 2)
        if densities:
            self.storage.write_table(command, "separable_density.csv", pd.concat(densities, ignore_index=True))
            self.plots.zero_entropy_density(command)
        logger.info(
            "entanglement-scan: %d raw / %d distinct zero-entropy states", census.raw_total, census.total
        )
        return summary

    def _evolve(self, config: RunConfig, es, H, basis, psi0, times, cuts, method: Optional[str] = None) -> ObservableTrace:
        evolution = config.evolution
        method = method or evolution.method
        if method == "exact":
            return self.dynamics_service.evolve_exact(es, psi0, times, cuts)
        if method == "krylov":
            return self.dynamics_service.evolve_krylov(H, basis, psi0, times, cuts)
        return self.dynamics_service.evolve_rk4(
            H, basis, psi0, times, dt=evolution.dt, renormalize=evolution.renormalize, cuts=cuts
        )

    def cmd_quench(self, config: RunConfig) -> QuenchSummary:
        """Fidelity, entropy and one-site density after quenches from named states"""
        command = StorageService.FOLDER_QUENCH
        quench = config.quench
        spec, basis, H = self._sector(config)
        cuts = self._check_cuts(quench.cuts, basis.L, "quench.cuts")
        if not 1 <= quench.site <= basis.L:
            raise ConfigError(f"quench.site: {quench.site} outside 1..{basis.L}")

        es = self.spectral_service.diagonalize(H, basis) if config.evolution.method == "exact" else None
        times = np.linspace(0.0, quench.t_max, int(round(quench.t_max / quench.step)) + 1)
        trace = self._evolve(config, es, H, basis, self.dynamics_service.initial_state(basis, quench.initial), times, cuts)

        fidelity_error = None
        if quench.initial == "psi0":
            fidelity_error = float(np.max(np.abs(trace.fidelity - np.cos(np.sqrt(2.0) * times) ** 2)))

        compare_frames, late = [], {}
        for name in dict.fromkeys([quench.initial, *quench.compare]):
            run = trace if name == quench.initial else self._evolve(
                config, es, H, basis, self.dynamics_service.initial_state(basis, name), times, ()
            )
            curve = run.density(quench.site)
            compare_frames.append(pd.DataFrame({"t": times, "initial": name, "density": curve}))
            late[name] = float(curve[curve.size // 2 :].mean())

        self.storage.write_config(command, config)
        self.storage.write_table(command, "trace.csv", self._trace_frame(trace))
        entropies = pd.DataFrame({"t": times})
        for cut in cuts:
            entropies[f"S_{cut}"] = trace.entropies[cut]
        self.storage.write_table(command, "entropies.csv", entropies)
        self.storage.write_table(command, "compare.csv", pd.concat(compare_frames, ignore_index=True))

        summary = QuenchSummary(
            model=self._model_summary(spec, basis),
            initial=quench.initial,
            method=config.evolution.method,
            t_max=quench.t_max,
            step=quench.step,
            revivals=self.dynamics_service.revivals(times, trace.fidelity),
            dominant_frequency=self.dynamics_service.dominant_frequency(times, trace.fidelity),
            fidelity_error=fidelity_error,
            max_norm_drift=float(np.max(np.abs(trace.norms - 1.0))),
            site=quench.site,
            late_density=late,
        )
        self.storage.write_summary(command, "summary.json", summary)
        self.plots.quench_observables(command)
        logger.info("quench: revival period %.6f", summary.revivals.period)
        return summary

    def _dw_run(self, config: RunConfig, Np: int):
        analysis, evolution = config.analysis, config.evolution
        spec, basis, H = self._sector(config, Np)
        psi0 = self.dynamics_service.initial_state(basis, "dw")
        t_max = evolution.resolved_t_max(basis.L)
        times = self.dynamics_service.log_schedule(evolution.t_min, t_max, evolution.points_per_decade)

        method = evolution.method
        es = None
        if len(basis) <= self.spectral_service.dense_cap:
            es = self.spectral_service.diagonalize(H, basis)
        elif method == "exact":
            logger.warning("dw: dim %d above the dense cap; Krylov evolution, no diagonal ensemble", len(basis))
            method = "krylov"
        trace = self._evolve(config, es, H, basis, psi0, times, (), method)
        infinite = self.dynamics_service.infinite_temperature_profile(basis)
        diagonal = self.dynamics_service.diagonal_ensemble(es, psi0) if es is not None else None
        try:
            late = self.dynamics_service.late_time_average(trace, *analysis.late_window)
        except InsufficientStatisticsError:
            late = self.dynamics_service.late_time_average(trace, t_max / 10.0)
        profile = diagonal if diagonal is not None else late
        slope = self.dynamics_service.profile_slope(profile, basis.Np)

        exponent = self.dynamics_service.dynamical_exponent(trace.times, trace.displacement, analysis.smoothing_window)
        early = exponent.values[exponent.times <= 1.0]
        plateau = self.dynamics_service.plateau_extent(
            exponent.times, exponent.values, analysis.plateau_level, analysis.plateau_tol
        )

        record = DwRecord(
            model=self._model_summary(spec, basis),
            method=method,
            t_max=t_max,
            samples=int(times.size),
            renormalizations=trace.renormalizations,
            ensemble_deviation=float(np.max(np.abs(diagonal - infinite))) if diagonal is not None else None,
            profile_slope=slope,
            c=-slope.slope,
            last_site=self.dynamics_service.last_site_growth(trace),
            early_inverse_z=float(np.mean(early)) if early.size else None,
            plateau=plateau,
            saturation=float(trace.displacement[-1]),
        )
        return spec, basis, trace, exponent, record, {"diagonal": diagonal, "infinite": infinite, "late": late}

    def cmd_dw(self, config: RunConfig) -> DwSummary:
        """Domain-wall quenches over one or more sizes: densities, R(t), 1/z and fronts"""
        command = StorageService.FOLDER_DW
        analysis = config.analysis
        self.storage.write_config(command, config)

        records, Ls, last_frames, profile_frames = [], [], [], []
        largest = None
        for Np in sorted({config.geometry.Np, *config.geometry.sweep}):
            spec, basis, trace, exponent, record, profiles = self._dw_run(config, Np)
            L = basis.L
            records.append(record)
            Ls.append(L)
            largest = (spec, basis, trace)

            self.storage.write_table(command, f"trace_L{L}.csv", self._trace_frame(trace))
            self.storage.write_table(
                command, f"exponent_L{L}.csv", pd.DataFrame({"t": exponent.times, "inv_z": exponent.values})
            )
            fronts = []
            for epsilon in analysis.epsilons:
                front = self.dynamics_service.threshold_front(trace, epsilon, analysis.smoothing_window)
                if front.exponent is None:
                    continue
                fronts.append(
                    pd.DataFrame(
                        {
                            "epsilon": epsilon,
                            "t": front.exponent.times,
                            "delta_r": np.interp(front.exponent.times, front.times, front.delta_r),
                            "inv_z": front.exponent.values,
                        }
                    )
                )
            self.storage.write_table(
                command,
                f"fronts_L{L}.csv",
                pd.concat(fronts, ignore_index=True)
                if fronts
                else pd.DataFrame(columns=["epsilon", "t", "delta_r", "inv_z"]),
            )
            last_frames.append(pd.DataFrame({"L": L, "t": trace.times, "density": trace.density(L)}))
            diagonal = profiles["diagonal"]
            profile_frames.append(
                pd.DataFrame(
                    {
                        "L": L,
                        "Np": basis.Np,
                        "site": np.arange(1, L + 1),
                        "diagonal": diagonal if diagonal is not None else np.full(L, np.nan),
                        "infinite_temperature": profiles["infinite"],
                        "late": profiles["late"],
                    }
                )
            )

        self.storage.write_table(command, "last_site.csv", pd.concat(last_frames, ignore_index=True))
        self.storage.write_table(command, "profiles.csv", pd.concat(profile_frames, ignore_index=True))

        plateaus = [(r.model.L, r.plateau.end) for r in records if r.plateau is not None]
        scaling = None
        if len(plateaus) >= 2:
            scaling = self.dynamics_service.plateau_scaling(*zip(*plateaus))

        summary = DwSummary(runs=records, plateau_scaling=scaling, collapse=self._collapse(config, *largest))
        self.storage.write_summary(command, "summary.json", summary)
        for L in Ls:
            self.plots.density_heatmap(L, command)
        self.plots.transport(Ls, command)
        return summary

    def _collapse(self, config: RunConfig, spec: ModelSpec, basis: SectorBasis, trace: ObservableTrace) -> Optional[CollapseSummary]:
        """Leg-population rescaling of the density curves on leg sites."""
        legs = self.fragmentation_service.backbone_legs(self.fragmentation_service.build_graph(basis, spec))
        populations = legs.populations
        if len(populations) < 2:
            logger.info("Fewer than two legs at L=%d; no collapse fit", basis.L)
            return None
        curves = {site: trace.density(site) for site in populations}
        fit = self.dynamics_service.fit_collapse_exponent(
            trace.times, curves, populations, alpha_range=config.analysis.alpha_range
        )
        return CollapseSummary(
            alpha=fit.alpha,
            score=fit.score,
            alphas=fit.alphas.tolist(),
            scores=fit.scores.tolist(),
            populations=populations,
        )

    def cmd_automaton(self, config: RunConfig) -> AutomatonSummary:
        """Classical circuit from the domain wall: bit map, R(t) and fronts"""
        command = StorageService.FOLDER_AUTOMATON
        settings = config.automaton
        service = AutomatonService(settings.layout)
        run = service.run_automaton(settings.L, settings.Np, settings.layers)
        try:
            crossover = service.locate_crossover(run.times, run.displacement, run.particle_front)
        except InsufficientStatisticsError as e:
            logger.warning("automaton: no crossover located: %s", e)
            crossover = None
        velocities = service.front_velocities(run, crossover.index if crossover else run.layers)
        encoded = service.encode_bitmap(run.bitmap)

        self.storage.write_config(command, config)
        self.storage.write_table(
            command,
            "displacement.csv",
            pd.DataFrame(
                {
                    "t": run.times,
                    "R": run.displacement,
                    "particle_front": run.particle_front,
                    "hole_front": run.hole_front,
                }
            ),
        )
        self.storage.write_bytes(command, "bitmap.eab", encoded)
        self.storage.write_image(command, "bitmap.pgm", service.to_image(run.bitmap))

        summary = AutomatonSummary(
            L=run.L,
            Np=run.Np,
            layers=run.layers,
            layout=run.layout.value,
            final_displacement=float(run.displacement[-1]),
            crossover=crossover,
            velocities=velocities,
            bitmap_bytes=len(encoded),
        )
        self.storage.write_summary(command, "summary.json", summary)
        self.plots.automaton_displacement(command)
        if crossover is not None:
            logger.info("automaton: crossover at layer %d, front %d", crossover.index, crossover.front)
        return summary

    def cmd_fragmentation(self, config: RunConfig) -> FragmentationSummary:
        """Basis and matrix dumps, adjacency graph, components, legs and sector counts"""
        command = StorageService.FOLDER_FRAGMENTATION
        spec, basis, H = self._sector(config)
        full = self.basis_service.enumerate_sector(basis.L, basis.Np, first_site_occupied=True)
        decomposition = self.fragmentation_service.connected_components(
            self.fragmentation_service.build_graph(full, spec)
        )

        graph = self.fragmentation_service.build_graph(basis, spec)
        legs = self.fragmentation_service.backbone_legs(graph)
        edges, vertices = self.fragmentation_service.export_graph(
            graph, self.fragmentation_service.connected_components(graph), legs
        )
        frozen = self.fragmentation_service.count_frozen_region_sectors(basis.Np, spec)
        growth = None
        if config.geometry.sweep:
            growth = self.fragmentation_service.component_count_growth(config.geometry.sweep, spec)

        self.storage.write_config(command, config)
        self.storage.write_text(command, "basis.txt", self.basis_service.dump_basis(basis))
        self.storage.write_text(command, "hamiltonian.txt", self.hamiltonian_service.dump_matrix(H))
        self.storage.write_text(command, "graph_edges.txt", edges)
        self.storage.write_text(command, "graph_vertices.txt", vertices)
        self.storage.write_table(
            command,
            "components.csv",
            pd.DataFrame({"component": np.arange(decomposition.count), "size": decomposition.sizes}),
        )
        self.storage.write_table(
            command,
            "legs.csv",
            pd.DataFrame({"i_max": list(legs.populations), "population": list(legs.populations.values())}),
        )
        self.storage.write_table(
            command,
            "frozen_sectors.csv",
            pd.DataFrame(frozen.labels, columns=["N_left", "L_left"]),
        )
        if growth is not None:
            self.storage.write_table(command, "growth.csv", pd.DataFrame({"Np": growth.Np, "count": growth.counts}))

        summary = FragmentationSummary(
            model=self._model_summary(spec, basis),
            full_sector_dim=len(full),
            components=decomposition.count,
            dw_component_size=len(basis),
            component_sizes=decomposition.sizes,
            backbone_size=legs.backbone_size,
            legs=legs.leg_count,
            leg_populations=legs.populations,
            parity_bound=self.fragmentation_service.zero_mode_lower_bound(basis),
            constraint_mismatches=len(self.hamiltonian_service.constraint_expansion_mismatch(spec)),
            frozen_sectors=frozen,
            growth=growth,
        )
        self.storage.write_summary(command, "summary.json", summary)
        logger.info(
            "fragmentation: %d components in the site-1-occupied sector, DW sector of %d", decomposition.count, len(basis)
        )
        return summary

    COMMANDS = {
        "spectrum": "cmd_spectrum",
        "entanglement-scan": "cmd_entanglement_scan",
        "quench": "cmd_quench",
        "dw": "cmd_dw",
        "automaton": "cmd_automaton",
        "fragmentation": "cmd_fragmentation",
    }

    def run(self, config: RunConfig):
        if config.command is None:
            raise ConfigError("no command given")
        return getattr(self, self.COMMANDS[config.command])(config)
