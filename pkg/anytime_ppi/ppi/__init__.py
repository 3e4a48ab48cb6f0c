from anytime_ppi.ppi.engine import (
    EstimatorFlavor,
    EstimatorKind,
    GCs,
    GridRegion,
    SubgradientMoments,
    classical_root,
    cs_g,
    cs_g_from_moments,
    delta_hat,
    invert,
    m_hat,
    power_tuning,
    theta_hat,
)
from anytime_ppi.ppi.loss import LossKind, LossModel, build_loss, generic_loss, squared_loss
