from anytime_ppi.stats.running_moments import (
    Observation,
    StreamState,
    VarianceFlavor,
    lambda_hat,
    update,
    var_estimators,
)
