"""Desk-scale study of per-qubit anneal offsets against perturbative
anticrossings: Ising instances, offset schedules, low spectra, closed-system
anneal dynamics, and the floppiness-driven mitigation iteration."""

__version__ = "0.1.0"

from .errors import SolverError, ValidationError
from .ising import (IsingInstance, ClassicalSpectrum, FlipGraph, SampleSet,
                    SccReport, antipodal, bitstring_to_state,
                    canonical_signature, chimera_automorphisms,
                    chimera_cell_grid, coupon_collector_expectation,
                    dedup_instances, dihedral_automorphisms, enumerate_spectrum,
                    floppiness_fraction, ground_state_probability,
                    manifold_flip_graph, manifold_floppiness, pack_spins,
                    random_instance, random_pm_j_instance, ring_chord_graph,
                    s_cc_from_probs, s_cc_metric, spins_of, state_to_bitstring,
                    testbed_filter)
from .schedule import (AnnealSchedule, OffsetVector, compensate_couplings,
                       default_schedule)
from .spectra import (DiagonalBasisCache, EigenResult, HamiltonianOperator,
                      MinGapResult, SpectrumReport, gap_scan,
                      gs_support_distribution, lowest_eigenpairs, minimize_gap)
from .perturbation import (PerturbationReport, delta_prime_exact,
                           delta_prime_first_order, effective_coupling_matrix,
                           perturbation_report)
from .dynamics import (EscapeRateReport, EvolutionResult, SamplerConfig,
                       calibrate_anneal_time, escape_rate_proxy, evolve_anneal,
                       krylov_propagate, sample, slice_count)
from .mitigation import (IterationRecord, MitigationAborted, MitigationConfig,
                         MitigationTrace, antimitigation_run, p_gs,
                         run_mitigation, single_offset_step, update_offsets)
from .fixtures import (bundled_gadget, floppy_valley_gadget,
                       gadget_certificate, gadget_false_valley_states,
                       pendant_ring_gadget, verify_certificate)
from .testbed import (BaselineRun, InstancePool, antipodal_pool,
                      antipodal_ring_pool, baseline_runs, degenerate_pool,
                      escape_rate_comparison, exact_manifold_floppiness,
                      gadget_gap_vs_alpha, hardest_first, raw_pool,
                      variant_gap_table)

__all__ = [name for name in dir() if not name.startswith("_")]
