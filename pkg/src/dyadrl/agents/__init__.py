"""Policy architectures: one joint learner, or one learner per intervention component."""
from .features import FEATURE_MAPS, STATE_DIMS, build_features
from .policies import (
    FixedProbLanePolicy,
    LanePolicy,
    MultiAgentPolicy,
    SingleAgentPolicy,
    TabularLanePolicy,
)
from .surrogate import (
    CARE_PRIOR,
    REL_PRIOR,
    SurrogateRewardModel,
    fit_coefficients,
    surrogate_care_reward,
    surrogate_rel_reward,
)
