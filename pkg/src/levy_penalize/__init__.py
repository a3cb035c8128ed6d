"""Supremum penalisation of one-dimensional Levy processes: closed forms, path simulation
and Monte Carlo experiments."""

__version__ = "0.1.0"

from .azema_yor import (  # noqa: E402
    ExpDecay,
    Indicator,
    MartingaleState,
    TableWeight,
    ay_eval,
    m0,
    m_qf_eval,
    m_sf_eval,
    n_qf_eval,
    parse_weight,
    weight_tail_integral,
)
from .levy_models import (  # noqa: E402
    LevyModel,
    brownian,
    check_convolution_identity,
    check_laplace_hq,
    h_eval,
    hq_eval,
    kappa_eval,
    n_tail_eval,
    parse_model,
    stable,
    sup_density_eval,
)
from .path_sim import ClockSpec, PathSample  # noqa: E402
