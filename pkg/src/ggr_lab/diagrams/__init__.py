"""GGR diagrams: enumeration, two evaluation engines, truncated series and tail bounds."""

from .graphs import (ClusterStats, Diagram, DiagramGraph, allowed_edges, cluster_stats,
                     count_graphs, dump_line, enumerate_connected_graphs, enumerate_diagrams,
                     enumerate_graphs, enumerate_trees, is_connected, iter_diagrams,
                     linked_components, make_diagram, parse_dump_line, permutation_sign, relabel)
from .engines import (MomentumPlan, TorusData, constraint_matrix, free_momentum_count,
                      plan_momentum, value_momentum, value_position)
from .expansion import (ClassSums, SeriesResult, all_diagram_sum, class_sums, convergence_lhs,
                        fit_tail_constants, graph_weight, graph_weight_direct, linked_sum,
                        linked_sums_by_cumulants, rhoJ_expansion, tail_bound, tail_estimate,
                        tilde_linked_sums_by_division, tree_partition_bound, wick_batch,
                        zj_expansion)
