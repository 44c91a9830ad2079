"""Slab covers, disjointification and collapse maps for singular measures."""
from .collapse import (
    CollapseMap, ExperimentReport, SlabUnion, collapse_eval, collapse_props_check, det_integral,
    jacobian_fd, make_collapse_map, mollified_eval, mollifier_radius, run_experiment,
)
from .cover import (
    ContractError, CoverReport, LipschitzGraph, Slab, SlabFamily, antichain_to_graph, build_cover,
    mcshane_eval, plan_cover, slab_width, verify_cover,
)
from .disjoint import (
    OrderedFamily, SeparatedFamily, choose_epsilon, order_slabs, separate_slabs, verify_disjoint_cover,
)
from .geometry import (
    apply_rotation, dominance_matrix, dominates, in_cone, is_tangent, random_rotation,
)
from .measures import (
    DiscreteMeasure, MeasureFormatError, MeasureValidationError, from_spec, gen_cantor_lebesgue,
    gen_cantor_product, gen_ifs, gen_lebesgue_grid, gen_segment, load_measure, parse_measure,
    save_measure, union,
)
from .poset import (
    GridSnapshot, LevelAssignment, chain_ratio_profile, longest_chain, max_weight_antichain,
    mirsky_levels, mirsky_levels_2d_fast, snap_to_grid, snapshot_levels,
)

__version__ = "0.1.0"
