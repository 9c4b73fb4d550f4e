"""Command line interface: ``psmdetect <command> [options]``.

Settings resolve in one order: command-line flags, then the ``--config``
file (flat ``key = value`` lines, ``#`` comments), then built-in defaults.
Every command writes its outputs atomically into ``--out`` together with a
``<command>.manifest.json`` holding input hashes, the resolved settings and
the producing version. Exit codes: 0 success, 1 I/O error, 2 bad parameters
or input, 3 internal invariant violation.
"""
import argparse
import errno
import glob
import hashlib
import json
import os
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import fields

from . import __version__
from .action_log import (extract_cascades, log_summary, parse_action_log, read_cascade_dump,
                         write_action_log, write_cascade_dump)
from .causality import METRICS, PAIR_SCOPES, WEIGHT_SCHEMES, CausalityScores, ScoringConfig, score_all
from .errors import InvariantError, ParameterError, PSMError, SchemaError
from .evaluation import (compare_methods, read_labels, render_table, reports_to_csv,
                         reports_to_jsonl, write_labels)
from .pipeline import CALIBRATIONS, MethodSettings, run_methods
from .selection import (DEFAULT_LAMBDA, DEFAULT_MIN_SCORE, DEFAULT_THETA, SelectionConfig,
                        calibrated_config, check_prosel, combo_select, prosel, read_selection,
                        threshold_select, write_selection)
from .synthgen import SynthConfig, generate, write_manifest

SCHEMA_VERSION = 1
COMMANDS = ("ingest", "score", "select", "prosel", "evaluate", "generate", "run")

_SYNTH_KEYS = {f.name: f.default for f in fields(SynthConfig) if f.name not in ("seed", "phi",
                                                                                 "viral_threshold")}

DEFAULTS = {
    "actions": None, "cascades": None, "scores": None, "selection": None, "labels": None,
    "out": "out", "format": "csv", "strict": False, "seed": 42, "workers": 1,
    "viral_threshold": 100, "phi": 0.5, "alpha": 1e-9, "prima_facie": True,
    "pair_scope": "all", "weight_scheme": "viral_participant",
    "metric": "wnb", "mode": "threshold", "combo_k": 3,
    "calibration": "absolute", "floor_quantile": 0.8, "seed_quantile": 0.98,
    "lambda_fraction": 0.5,
    "synth_phi": SynthConfig.phi,
    **_SYNTH_KEYS,
}
for _m in METRICS:
    DEFAULTS[f"threshold_{_m}"] = DEFAULT_MIN_SCORE[_m]
    DEFAULTS[f"theta_{_m}"] = DEFAULT_THETA[_m]
    DEFAULTS[f"lambda_{_m}"] = DEFAULT_LAMBDA[_m]
    DEFAULTS[f"min_score_{_m}"] = DEFAULT_MIN_SCORE[_m]

_CHOICES = {"format": ("csv", "jsonl"), "pair_scope": PAIR_SCOPES,
            "weight_scheme": WEIGHT_SCHEMES, "metric": METRICS,
            "mode": ("threshold", "combo"), "calibration": CALIBRATIONS}
# flags that set a per-metric key for the chosen --metric
_PER_METRIC_FLAGS = ("threshold", "theta", "lambda", "min_score")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key, value):
    default = DEFAULTS[key]
    if isinstance(value, str):
        value = value.strip()
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            if value.lower() in _TRUE:
                return True
            if value.lower() in _FALSE:
                return False
            raise ValueError
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{key}: cannot interpret {value!r}") from None
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ParameterError(f"{key} must be one of {_CHOICES[key]}, got {value!r}")
    return value


def read_config(path) -> dict:
    """Parse a flat ``key = value`` settings file."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{line_no}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise ParameterError(f"{path}:{line_no}: unknown setting {key!r}")
            out[key] = _coerce(key, value)
    return out


def resolve_settings(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    cfg = dict(DEFAULTS)
    given = vars(args)
    if given.get("config"):
        cfg.update(read_config(given["config"]))
    per_metric = {}
    for key, value in given.items():
        if key in ("command", "config"):
            continue
        if key in _PER_METRIC_FLAGS:
            per_metric[key] = value
            continue
        cfg[key] = _coerce(key, value)
    for key, value in per_metric.items():
        name = f"{key}_{cfg['metric']}"
        cfg[name] = _coerce(name, value)
    return cfg


def _parser():
    shared = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = shared.add_argument_group("shared options")
    g.add_argument("--config", help="flat key = value settings file")
    g.add_argument("--actions", help="action log (csv or jsonl)")
    g.add_argument("--labels", help="account status labels, user_id,status csv")
    g.add_argument("--out", help="output directory (default: out)")
    g.add_argument("--seed", type=int, help="seed for every random choice (default: 42)")
    g.add_argument("--workers", type=int, help="worker threads for scoring (default: 1)")
    g.add_argument("--strict", action="store_true", help="fail on the first malformed line")
    g.add_argument("--format", choices=("csv", "jsonl"), help="action log format (default: csv)")
    g.add_argument("--cascades", help="cascade dump to use instead of --actions")
    g.add_argument("--viral-threshold", dest="viral_threshold", type=int)
    g.add_argument("--phi", type=float, help="key-user fraction (default: 0.5)")

    p = argparse.ArgumentParser(
        prog="psmdetect",
        description="Detect pathogenic social media accounts from an action log.",
        epilog="Settings precedence: command-line flags > --config file > defaults. "
               "Exit codes: 0 ok, 1 I/O error, 2 bad parameters or input, 3 invariant violation.")
    p.add_argument("--version", action="version", version=f"psmdetect {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def scoring(sp):
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--prima-facie", dest="prima_facie", choices=("on", "off"))
        sp.add_argument("--pair-scope", dest="pair_scope", choices=PAIR_SCOPES)
        sp.add_argument("--weight-scheme", dest="weight_scheme", choices=WEIGHT_SCHEMES)

    def selecting(sp):
        sp.add_argument("--metric", choices=METRICS)
        sp.add_argument("--theta", type=float, help="seed threshold for --metric")
        sp.add_argument("--lambda", dest="lambda", type=float, help="slack for --metric")
        sp.add_argument("--min-score", dest="min_score", type=float, help="floor for --metric")
        sp.add_argument("--calibration", choices=CALIBRATIONS)

    sub.add_parser("ingest", parents=[shared], help="extract cascades and print dataset counts",
                   argument_default=argparse.SUPPRESS)
    sp = sub.add_parser("score", parents=[shared], help="compute the four causality metrics",
                        argument_default=argparse.SUPPRESS)
    scoring(sp)
    sp = sub.add_parser("select", parents=[shared], help="threshold or k-of-4 selection",
                        argument_default=argparse.SUPPRESS)
    sp.add_argument("--scores", help="scores csv from the score command")
    sp.add_argument("--metric", choices=METRICS)
    sp.add_argument("--mode", choices=("threshold", "combo"))
    sp.add_argument("--threshold", type=float, help="cut-off for --metric")
    sp.add_argument("--combo-k", dest="combo_k", type=int)
    sp = sub.add_parser("prosel", parents=[shared], help="label propagation selection",
                        argument_default=argparse.SUPPRESS)
    sp.add_argument("--scores", help="scores csv from the score command")
    selecting(sp)
    sp = sub.add_parser("evaluate", parents=[shared], help="precision and cascade sizes",
                        argument_default=argparse.SUPPRESS)
    sp.add_argument("--selection", help="selection jsonl (comma-separated for several)")
    sp = sub.add_parser("generate", parents=[shared], help="synthetic log with planted accounts",
                        argument_default=argparse.SUPPRESS)
    _synth_flags(sp)
    sp = sub.add_parser("run", parents=[shared], help="generate or ingest, score, select, evaluate",
                        argument_default=argparse.SUPPRESS)
    scoring(sp)
    selecting(sp)
    sp.add_argument("--combo-k", dest="combo_k", type=int)
    _synth_flags(sp)
    return p


def _synth_flags(sp):
    for key in list(_SYNTH_KEYS) + ["synth_phi"]:
        sp.add_argument("--" + key.replace("_", "-"), dest=key, type=str)


# -- file plumbing ---------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def atomic_open(path):
    """Write to a temporary sibling and rename over ``path`` on success."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix="." + os.path.basename(path) + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def check_stamp(path):
    """Refuse a file whose producing manifest carries another schema version."""
    name = os.path.basename(path)
    for mpath in sorted(glob.glob(os.path.join(os.path.dirname(os.path.abspath(path)),
                                               "*.manifest.json"))):
        try:
            with open(mpath, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, ValueError):
            continue
        if name in doc.get("outputs", {}) and doc.get("schema") != SCHEMA_VERSION:
            raise SchemaError(f"{path} was written by psmdetect {doc.get('version')} "
                              f"(schema {doc.get('schema')}); this build reads schema "
                              f"{SCHEMA_VERSION}")


class _Job:
    """Tracks inputs and outputs of one command for its manifest."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.out = cfg["out"]
        self.inputs = {}
        self.outputs = {}

    def need(self, key, path=None):
        path = path or self.cfg.get(key)
        if not path:
            raise ParameterError(f"{self.command} needs --{key.replace('_', '-')}")
        if not os.path.isfile(path):
            raise FileNotFoundError(errno.ENOENT, "no such file", path)
        check_stamp(path)
        self.inputs[path] = _sha256(path)
        return path

    @contextmanager
    def write(self, name):
        path = os.path.join(self.out, name)
        with atomic_open(path) as fh:
            yield fh
        self.outputs[name] = _sha256(path)

    def finish(self):
        doc = {"tool": "psmdetect", "version": __version__, "schema": SCHEMA_VERSION,
               "command": self.command, "config": self.cfg, "inputs": self.inputs,
               "outputs": self.outputs}
        with atomic_open(os.path.join(self.out, f"{self.command}.manifest.json")) as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- helpers ----------------------------------------------------------------

def _load_log(job):
    cfg = job.cfg
    log = parse_action_log(job.need("actions"), format=cfg["format"], strict=cfg["strict"])
    if log.skipped:
        print(f"skipped {log.skipped} malformed line(s)", file=sys.stderr)
    return log


def _load_cascades(job):
    cfg = job.cfg
    if cfg.get("cascades"):
        return None, read_cascade_dump(job.need("cascades"), cfg["viral_threshold"], cfg["phi"])
    log = _load_log(job)
    return log, extract_cascades(log, cfg["viral_threshold"], cfg["phi"])


def _scoring_config(cfg):
    return ScoringConfig(alpha=cfg["alpha"], prima_facie=cfg["prima_facie"], pair_scope=cfg["pair_scope"],
                         weight_scheme=cfg["weight_scheme"], workers=cfg["workers"])


def _selection_config(cfg, metric):
    return SelectionConfig(metric=metric, theta=cfg[f"theta_{metric}"],
                           lam=cfg[f"lambda_{metric}"], min_score=cfg[f"min_score_{metric}"],
                           combo_k=cfg["combo_k"], combo_thresholds=_thresholds(cfg))


def _thresholds(cfg):
    return {m: cfg[f"threshold_{m}"] for m in METRICS}


def _synth_config(cfg):
    kw = {k: cfg[k] for k in _SYNTH_KEYS}
    return SynthConfig(seed=cfg["seed"], phi=cfg["synth_phi"],
                       viral_threshold=cfg["viral_threshold"], **kw)


def _read_scores(job):
    with open(job.need("scores"), encoding="utf-8", newline="") as fh:
        return CausalityScores.from_csv(fh)


def _print_summary(summary):
    width = max(len(k) for k in summary)
    for k, v in summary.items():
        print(f"{k.ljust(width)}  {v}")


# -- commands ---------------------------------------------------------------

def cmd_ingest(cfg):
    job = _Job("ingest", cfg)
    log, cascades = _load_cascades(job)
    summary = log_summary(log, cascades) if log is not None else cascades.summary()
    with job.write("cascades.jsonl") as fh:
        write_cascade_dump(cascades, fh)
    with job.write("summary.json") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    job.finish()
    _print_summary(summary)


def cmd_score(cfg):
    job = _Job("score", cfg)
    _, cascades = _load_cascades(job)
    scores = score_all(cascades, _scoring_config(cfg))
    with job.write("scores.csv") as fh:
        scores.to_csv(fh)
    job.finish()
    print(f"scored {len(scores)} users over {cascades.n_messages} cascades "
          f"({cascades.n_viral} viral)")


def cmd_select(cfg):
    job = _Job("select", cfg)
    scores = _read_scores(job)
    metric = cfg["metric"]
    if cfg["mode"] == "combo":
        selected = combo_select(scores, _thresholds(cfg), cfg["combo_k"])
        name = f"combo-{cfg['combo_k']}"
    else:
        selected = threshold_select(scores, metric, cfg[f"threshold_{metric}"])
        name = f"threshold-{metric}"
    with job.write(f"{name}.jsonl") as fh:
        write_selection(fh, selected, scores, metric)
    job.finish()
    print(f"{name}: {len(selected)} users")


def cmd_prosel(cfg):
    job = _Job("prosel", cfg)
    scores = _read_scores(job)
    _, cascades = _load_cascades(job)
    metric = cfg["metric"]
    if cfg["calibration"] == "quantile":
        config = calibrated_config(scores, metric, cfg["floor_quantile"], cfg["seed_quantile"],
                                   cfg["lambda_fraction"])
    else:
        config = _selection_config(cfg, metric)
    result = prosel(cascades, scores, config)
    check_prosel(result, cascades, scores, config)
    with job.write(f"prosel-{metric}.jsonl") as fh:
        write_selection(fh, result.selected, scores, metric, result.provenance)
    job.finish()
    print(f"prosel-{metric}: {len(result.selected)} users ({len(result.seeds)} seeds), "
          f"{result.iterations} iterations")


def cmd_evaluate(cfg):
    job = _Job("evaluate", cfg)
    labels = read_labels(job.need("labels"))
    cascades = {}
    if cfg.get("actions") or cfg.get("cascades"):
        _, cascades = _load_cascades(job)
    paths = [p for p in (cfg.get("selection") or "").split(",") if p]
    if not paths:
        raise ParameterError("evaluate needs --selection")
    methods = {}
    for path in paths:
        with open(job.need("selection", path), encoding="utf-8") as fh:
            methods[os.path.splitext(os.path.basename(path))[0]] = set(read_selection(fh))
    reports = compare_methods(methods, labels, cascades)
    _write_reports(job, reports)
    job.finish()
    print(render_table(reports), end="")


def _write_reports(job, reports):
    with job.write("report.csv") as fh:
        reports_to_csv(reports, fh)
    with job.write("report.jsonl") as fh:
        reports_to_jsonl(reports, fh)
    with job.write("table.txt") as fh:
        fh.write(render_table(reports))


def _generate(job, cfg):
    synth = _synth_config(cfg)
    log, truth = generate(synth)
    with job.write(f"actions.{cfg['format']}") as fh:
        write_action_log(log, fh, cfg["format"])
    with job.write("labels.csv") as fh:
        write_labels(truth.labels, fh)
    with job.write("synth.json") as fh:
        write_manifest(synth, fh, {"n_psm": synth.n_psm})
    return synth, log, truth


def cmd_generate(cfg):
    job = _Job("generate", cfg)
    synth, log, _ = _generate(job, cfg)
    job.finish()
    print(f"generated {len(log)} actions over {synth.n_messages} messages, "
          f"{synth.n_users} users ({synth.n_psm} planted)")


def cmd_run(cfg):
    job = _Job("run", cfg)
    if cfg.get("actions") or cfg.get("cascades"):
        _, cascades = _load_cascades(job)
        labels = read_labels(job.need("labels"))
    else:
        synth, log, truth = _generate(job, cfg)
        cascades = extract_cascades(log, synth.viral_threshold, cfg["phi"])
        labels = truth.labels
    scores = score_all(cascades, _scoring_config(cfg))
    with job.write("scores.csv") as fh:
        scores.to_csv(fh)

    settings = MethodSettings(
        calibration=cfg["calibration"], thresholds=_thresholds(cfg),
        prosel={m: _selection_config(cfg, m) for m in METRICS},
        floor_quantile=cfg["floor_quantile"], seed_quantile=cfg["seed_quantile"],
        lambda_fraction=cfg["lambda_fraction"], combo_k=cfg["combo_k"],
        random_seed=cfg["seed"], random_size_of=f"prosel-{cfg['metric']}")
    run = run_methods(cascades, scores, settings)
    for m, result in run.prosel_results.items():
        check_prosel(result, cascades, scores, run.prosel_configs[m])
    for name, selected in run.selections.items():
        metric = name.rsplit("-", 1)[1] if name.split("-")[0] in ("threshold", "prosel") else None
        prov = run.prosel_results[metric].provenance if name.startswith("prosel-") else None
        with job.write(os.path.join("selections", f"{name}.jsonl")) as fh:
            write_selection(fh, selected, scores if metric else None, metric, prov)
    reports = compare_methods(run.selections, labels, cascades)
    _write_reports(job, reports)
    job.finish()
    print(render_table(reports), end="")


_HANDLERS = {"ingest": cmd_ingest, "score": cmd_score, "select": cmd_select,
             "prosel": cmd_prosel, "evaluate": cmd_evaluate, "generate": cmd_generate,
             "run": cmd_run}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = resolve_settings(args)
        _HANDLERS[args.command](cfg)
    except InvariantError as exc:
        print(f"psmdetect: invariant violated: {exc}", file=sys.stderr)
        return 3
    except UnicodeDecodeError as exc:
        print(f"psmdetect: cannot decode input: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"psmdetect: {exc}", file=sys.stderr)
        return 1
    except (PSMError, ValueError) as exc:
        print(f"psmdetect: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
