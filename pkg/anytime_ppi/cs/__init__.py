from anytime_ppi.cs.core import (
    CsConfig,
    Interval,
    radius_ba,
    radius_exact_gaussian,
    radius_improper,
    radius_na,
    rho_opt,
    tau_heuristic,
)
from anytime_ppi.cs.priors import Prior, PriorKind
from anytime_ppi.cs.quadrature import eta, eta_laplace_closed_form, log_eta
