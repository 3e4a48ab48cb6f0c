from anytime_ppi.data.io import iter_observations, load_table, read_table, write_table
from anytime_ppi.data.scenarios import (
    LabelledStream,
    Scenario,
    ScenarioKind,
    gen_biased,
    gen_gaussian,
    gen_noisy,
)
