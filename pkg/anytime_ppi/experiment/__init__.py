from anytime_ppi.experiment.experiment import Experimenter, experiment
from anytime_ppi.experiment.harness import (
    MethodSpec,
    MetricRow,
    metrics_frame,
    parse_method,
    parse_methods,
    run_replications,
    summary_frame,
)
from anytime_ppi.experiment.replay import ReplayData, load_replay_data, replay
from anytime_ppi.experiment.run import Run
