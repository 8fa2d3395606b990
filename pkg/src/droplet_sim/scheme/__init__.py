from .mapshuffle import (
    InfeasibleError,
    MapResult,
    MapState,
    fast_optimal,
    fast_round_robin,
    order_optimal,
    order_round_robin,
    run_map_shuffle,
)
from .params import (
    InfeasibleParams,
    Placement,
    SystemParams,
    divisors_up_to,
    make_params,
    place,
    sigma_K,
    solve_params,
)
from .pipeline import (
    SimulationTrace,
    TrialSummary,
    analytical_delay,
    choose_q,
    draw_requirements,
    ideal_profile,
    required_droplets,
    run_reduce,
    run_scheme,
    run_trials,
)
from .verify import VerifyReport, verify_end_to_end
