"""Active radio map surveying at desk scale.

Simulates shadowing-correlated radio maps, estimates them online from
sequentially collected power measurements with calibrated per-location
uncertainty, and plans UAV measurement trajectories through regions of
high uncertainty.
"""

from radiosurvey.grid import GridGeometry
from radiosurvey.mapgen import (
    GaussianModelParams,
    Measurement,
    RadioMap,
    Transmitter,
    base_power,
    generate_map,
    measure,
    sample_shadowing_field,
    shadowing_covariance,
)
from radiosurvey.kriging import Posterior, batch_posterior
from radiosurvey.online import (
    OnlineEstimator,
    ShadowingPrior,
    UpdateTerms,
    compute_update_terms,
    init_posterior,
    update_posterior,
)
from radiosurvey.uncertainty import (
    UncertaintyMap,
    bayes_uncertainty,
    knn_estimate,
    rmse,
    smooth,
    total_uncertainty,
)
from radiosurvey.planner import (
    CostField,
    PlannerConfig,
    TrajectoryPlan,
    cost_field,
    edge_cost,
    plan_receding,
    select_destination,
    shortest_path,
)
from radiosurvey.survey import (
    MapSpec,
    SurveyConfig,
    SurveyRecord,
    monte_carlo,
    run_survey,
    sample_along_path,
)

__version__ = "0.1.0"
