"""Multi-objective weighted sampling of key/weight data.

One coordinated sample answers segment-sum queries for a whole family of
statistics (sums, counts, thresholds, cappings, moments and their
nonnegative combinations).  Samples are built in one streaming pass,
merge exactly across shards, and carry the inclusion probabilities that
make inverse-probability estimates unbiased.
"""

from .core import Dataset, Element, ExactSum, Mode, RandSource, aggregate, exact_sum, key_bytes
from .errors import (ContractViolation, CorruptSampleError, DataError, EmptySupportError, MosampleError,
                     ParameterMismatch, SolverContractError)
from .estimator import EstimateResult, estimate_segment_sum, estimate_with_upper_bounds, support_warnings
from .formats import dumps_sample, iter_elements, loads_sample, read_pairs, read_sample, write_sample
from .multi import (MultiBotkBuilder, MultiBotkSample, MultiPpsBuilder, MultiPpsSample, UpperBoundSample,
                    base_probabilities, mo_botk_build, mo_botk_merge, mo_botk_overhead, mo_pps_build,
                    mo_pps_merge, mo_pps_overhead, mo_pps_probability, ub_pps_build)
from .objectives import (Cap, Combo, Count, Moment, Objective, StatFn, Sum, Table, Threshold, disparity,
                         parse_stat, segment_sum_exact)
from .optimizer import OptimizationProblem, OptimizationResult, OuterFunction, certify, optimize
from .single import (BottomKBuilder, BottomKSample, PoissonSample, PpsBuilder, botk_build, botk_merge,
                     pps_build, pps_merge, pps_probability)
from .universal import (UniversalCappingSample, UniversalMonotoneSample, monotone_base_probability,
                        universal_capping_build, universal_capping_merge, universal_monotone_build,
                        universal_monotone_by_u, universal_monotone_by_weight, universal_monotone_merge)

__version__ = "0.1.0"

__all__ = [
    "BottomKBuilder", "BottomKSample", "Cap", "Combo", "ContractViolation", "CorruptSampleError", "Count",
    "DataError", "Dataset", "Element", "EmptySupportError", "EstimateResult", "ExactSum", "Mode", "Moment",
    "MosampleError", "MultiBotkBuilder", "MultiBotkSample", "MultiPpsBuilder", "MultiPpsSample", "Objective",
    "OptimizationProblem", "OptimizationResult", "OuterFunction", "ParameterMismatch", "PoissonSample",
    "PpsBuilder", "RandSource", "SolverContractError", "StatFn", "Sum", "Table", "Threshold",
    "UniversalCappingSample", "UniversalMonotoneSample", "UpperBoundSample", "aggregate", "base_probabilities",
    "botk_build", "botk_merge", "certify", "disparity", "dumps_sample", "estimate_segment_sum",
    "estimate_with_upper_bounds", "exact_sum", "iter_elements", "key_bytes", "loads_sample",
    "mo_botk_build", "mo_botk_merge", "mo_botk_overhead", "mo_pps_build", "mo_pps_merge", "mo_pps_overhead",
    "mo_pps_probability", "monotone_base_probability", "optimize", "parse_stat", "pps_build", "pps_merge",
    "pps_probability", "read_pairs", "read_sample", "segment_sum_exact", "support_warnings", "ub_pps_build",
    "universal_capping_build", "universal_capping_merge", "universal_monotone_build",
    "universal_monotone_by_u", "universal_monotone_by_weight", "universal_monotone_merge", "write_sample",
]
