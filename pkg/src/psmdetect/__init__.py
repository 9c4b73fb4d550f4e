"""Detecting pathogenic social media accounts from bare action logs.

Typical use::

    from psmdetect import parse_action_log, extract_cascades, score_all, prosel
    log = parse_action_log("actions.csv")
    cascades = extract_cascades(log, viral_threshold=100, phi=0.5)
    scores = score_all(cascades)
    result = prosel(cascades, scores)
"""
from .action_log import (ActionLog, ActionRecord, Cascade, CascadeSet, extract_cascades,
                         key_user_check, log_summary, parse_action_log, read_cascade_dump,
                         write_action_log, write_cascade_dump)
from .causality import (METRICS, CausalityScores, PairStats, RelatedIndex, ScoringConfig,
                        build_related_index, eps_km, eps_nb, eps_rel, eps_wnb,
                        pair_probabilities, prima_facie_users, relative_likelihood, score_all)
from .errors import (GenerationError, InvariantError, MalformedRecordError, ParameterError,
                     PSMError, SchemaError)
from .evaluation import (EvaluationReport, compare_methods, evaluate, read_labels,
                         render_table, write_labels)
from .pipeline import MethodSettings, benchmark, run_methods
from .selection import (SEED, SelectionConfig, SelectionResult, calibrated_config, combo_select,
                        prosel, random_baseline, threshold_select)
from .synthgen import GroundTruth, SynthConfig, generate

__version__ = "0.1.0"
