"""End-to-end wiring: cascades -> scores -> every selection method -> reports.

The method table mirrors the comparison layout used throughout the package:
``random``, ``threshold-<metric>`` for each metric, ``combo-<k>``, and
``prosel-<metric>`` for each metric. The random row draws as many users as
the reference method (``prosel-wnb`` by default) selected.

Cut-offs come either from absolute values (the defaults in
:mod:`psmdetect.selection`) or, with ``calibration="quantile"``, from the
score distribution of each metric. Quantile calibration is what makes the
small synthetic benchmarks meaningful, since their score ranges are far
narrower than on large real logs.
"""
from dataclasses import dataclass, field
from typing import Optional

from .action_log import extract_cascades
from .causality import METRICS, ScoringConfig, score_all
from .evaluation import compare_methods
from .errors import ParameterError
from .selection import (DEFAULT_MIN_SCORE, SelectionConfig, calibrated_config, combo_select,
                        prosel, random_baseline, score_map, score_quantile, threshold_select)
from .synthgen import SynthConfig, generate

CALIBRATIONS = ("absolute", "quantile")


@dataclass(frozen=True)
class MethodSettings:
    calibration: str = "absolute"
    # absolute mode
    thresholds: Optional[dict] = None   # metric -> threshold-selection cut-off
    prosel: Optional[dict] = None       # metric -> SelectionConfig
    # quantile mode
    floor_quantile: float = 0.8
    seed_quantile: float = 0.98
    lambda_fraction: float = 0.5
    combo_k: int = 3
    random_seed: int = 42
    random_size_of: str = "prosel-wnb"

    def __post_init__(self):
        if self.calibration not in CALIBRATIONS:
            raise ParameterError(f"calibration must be one of {CALIBRATIONS}")


@dataclass
class MethodRun:
    selections: dict                     # method name -> set of users, in table order
    prosel_results: dict = field(default_factory=dict)
    prosel_configs: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)


def method_names(combo_k=3):
    return (["random"] + [f"threshold-{m}" for m in METRICS] + [f"combo-{combo_k}"]
            + [f"prosel-{m}" for m in METRICS])


def run_methods(cascades, scores, settings: Optional[MethodSettings] = None) -> MethodRun:
    settings = settings or MethodSettings()
    thresholds, configs = {}, {}
    for m in METRICS:
        defined = bool(score_map(scores, m))
        if settings.calibration == "quantile":
            thresholds[m] = score_quantile(scores, m, settings.floor_quantile) if defined else None
            configs[m] = (calibrated_config(scores, m, settings.floor_quantile,
                                            settings.seed_quantile, settings.lambda_fraction)
                          if defined else None)
        else:
            thresholds[m] = (settings.thresholds or {}).get(m, DEFAULT_MIN_SCORE[m])
            configs[m] = (settings.prosel or {}).get(m) or SelectionConfig(metric=m)

    selections = {}
    for m in METRICS:
        selections[f"threshold-{m}"] = (threshold_select(scores, m, thresholds[m])
                                        if thresholds[m] is not None else set())
    # a metric without defined scores cannot count toward the combination anyway
    combo_thresholds = {m: 0.0 if thresholds[m] is None else thresholds[m] for m in METRICS}
    selections[f"combo-{settings.combo_k}"] = combo_select(scores, combo_thresholds,
                                                           settings.combo_k)
    results = {}
    for m in METRICS:
        if configs[m] is None:
            selections[f"prosel-{m}"] = set()
            continue
        res = prosel(cascades, scores, configs[m])
        results[m] = res
        selections[f"prosel-{m}"] = set(res.selected)

    n = len(selections.get(settings.random_size_of, ()))
    selections = {"random": random_baseline(cascades.user_ids, n, settings.random_seed),
                  **selections}
    return MethodRun(selections, results, configs, thresholds)


@dataclass
class BenchmarkResult:
    synth: SynthConfig
    cascades: object
    scores: object
    truth: object
    run: MethodRun
    reports: list

    def report(self, method):
        return next(r for r in self.reports if r.method == method)


def benchmark(synth: SynthConfig, phi=0.5, scoring: Optional[ScoringConfig] = None,
              settings: Optional[MethodSettings] = None) -> BenchmarkResult:
    """Generate a synthetic log, score it, run every method and evaluate each one."""
    settings = settings or MethodSettings(calibration="quantile", random_seed=synth.seed)
    log, truth = generate(synth)
    cascades = extract_cascades(log, synth.viral_threshold, phi)
    scores = score_all(cascades, scoring or ScoringConfig())
    run = run_methods(cascades, scores, settings)
    reports = compare_methods(run.selections, truth.labels, cascades)
    return BenchmarkResult(synth, cascades, scores, truth, run, reports)
