"""Command-line front end.

Subcommands mirror the stages of the pipeline and exchange plain CSV/JSON
files, so any stage can be rerun from the outputs of the previous one::

    taxoscore simulate --config demo.json --out run
    taxoscore classify --data run/events.csv --scheme all --out run
    taxoscore fit      --data run/events.csv --scheme all --out run
    taxoscore score    --data run/events.csv --models run/fits --out run
    taxoscore test     --scores run/scores --baseline None --out run
    taxoscore report   --manifest run/manifest_score.json --out run
    taxoscore power    --model FIT.json --baseline-model FIT.json --data run/events.csv --out run
    taxoscore demo     --config demo.json --out run

Every subcommand writes ``manifest_<command>.json`` into ``--out``. Errors
are reported as one JSON object on stderr with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import gamlss, harness
from .classifications import SCHEMES, ClassificationAssignment, LabelRule, build_scheme
from .data_model import SchemaError, SynthConfig, load_events, synth_generate
from .evt_gpd import ThresholdResult
from .inference import CRIT_05, TRIM_QUANTILES, AlignmentError
from .scoring import ScoreKind, ScoreSeries, WeightKind

log = logging.getLogger("taxoscore")

CONFIG_SECTIONS = ("synth", "pipeline", "power")
_POWER_KEYS = {"sizes", "n_rep", "n_draws_per_event", "kind", "beta"}


class CliError(ValueError):
    """Invalid invocation: bad config, missing or inconsistent input files."""


def _version():
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # noqa: BLE001 - package metadata is optional
        return "0.1.0"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


# --------------------------------------------------------------------------
# configuration and manifest
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Parsed ``--config`` file with the ``--seed`` override applied."""

    synth: SynthConfig
    pipeline: harness.PipelineConfig
    power: dict

    @classmethod
    def load(cls, path=None, seed=None):
        raw = {}
        if path is not None:
            if not os.path.exists(path):
                raise CliError(f"config file not found: {path}")
            with open(path, encoding="utf-8") as fh:
                try:
                    raw = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise CliError(f"{path}: invalid JSON ({exc})") from None
            if not isinstance(raw, dict):
                raise CliError(f"{path}: top level must be an object")
        extra = set(raw) - set(CONFIG_SECTIONS)
        if extra:
            raise CliError(f"unknown config sections {sorted(extra)}")
        synth = dict(raw.get("synth", {}))
        pipe = dict(raw.get("pipeline", {}))
        power = dict(raw.get("power", {}))
        bad = set(power) - _POWER_KEYS
        if bad:
            raise CliError(f"unknown power keys {sorted(bad)}")
        if seed is not None:
            synth["seed"] = pipe["seed"] = int(seed)
        try:
            return cls(SynthConfig.from_dict(synth), harness.PipelineConfig.from_dict(pipe), power)
        except (TypeError, ValueError) as exc:
            raise CliError(f"config: {exc}") from None

    @property
    def seed(self):
        return self.pipeline.seed

    def to_dict(self):
        return {"synth": self.synth.to_dict(), "pipeline": self.pipeline.to_dict(), "power": dict(self.power)}

    def digest(self):
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunManifest:
    """Record of one subcommand run.

    Paths inside the output directory are stored relative to it, so two runs
    into different directories produce identical manifests. No timestamps.
    """

    command: str
    config_hash: str
    seed: int
    version: str
    inputs: dict = field(default_factory=dict)  # name -> {"path", "sha256"}
    outputs: dict = field(default_factory=dict)  # relative path -> sha256
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"command": self.command, "config_hash": self.config_hash, "seed": self.seed,
                "version": self.version, "inputs": self.inputs, "outputs": self.outputs, "params": self.params}

    @classmethod
    def from_dict(cls, d):
        return cls(d["command"], d["config_hash"], d["seed"], d["version"], d.get("inputs", {}),
                   d.get("outputs", {}), d.get("params", {}))

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            raise CliError(f"manifest not found: {path}")
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _rel(path, out):
    path = os.path.abspath(path)
    out = os.path.abspath(out)
    if os.path.commonpath([path, out]) == out:
        return os.path.relpath(path, out).replace(os.sep, "/")
    return path


class _Run:
    """Collects inputs and outputs of a subcommand and writes its manifest."""

    def __init__(self, command, cfg: RunConfig, out, params=None):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command, cfg.digest(), cfg.seed, _version(), params=params or {})

    def input(self, name, path):
        if not os.path.exists(path):
            raise CliError(f"{name}: file not found: {path}")
        self.manifest.inputs[name] = {"path": _rel(path, self.out), "sha256": sha256_file(path)}

    def output(self, path):
        self.manifest.outputs[_rel(path, self.out)] = sha256_file(path)
        for side in (str(path) + ".json",):
            if os.path.exists(side):
                self.manifest.outputs[_rel(side, self.out)] = sha256_file(side)

    def finish(self):
        self.manifest.outputs = dict(sorted(self.manifest.outputs.items()))
        path = self.out / f"manifest_{self.manifest.command}.json"
        _dump_json(self.manifest.to_dict(), path)
        return self.manifest


def _load_data(path):
    if not os.path.exists(path):
        raise CliError(f"data file not found: {path}")
    return load_events(path)


def _schemes(names):
    if not names or names == ["all"]:
        return list(SCHEMES)
    bad = [n for n in names if n not in SCHEMES]
    if bad:
        raise CliError(f"unknown scheme(s) {bad}; choose from {list(SCHEMES)}")
    return list(names)


# --------------------------------------------------------------------------
# fit bundles: everything the scoring stage needs about one window
# --------------------------------------------------------------------------

def bundle_to_dict(scheme, wf: harness.WindowFit | None, window, window_index, threshold, error=None):
    a = None if wf is None else wf.assignment
    return {
        "scheme": scheme,
        "window": {"train": list(window.train), "test": window.test, "index": window_index},
        "threshold": None if isinstance(threshold, Exception) or threshold is None else threshold.to_dict(),
        "assignment": None if a is None else {
            "scheme": a.scheme_name, "categories": list(a.categories),
            "rule": None if a.rule is None else a.rule.to_dict()},
        "model": None if wf is None else wf.model.to_dict(),
        "knot_path": [] if wf is None else [_path_row(r) for r in wf.knot_path],
        "notes": [] if wf is None else list(wf.notes),
        "error": error,
    }


def _path_row(row):
    k, g1, g2, aic = row
    return [int(k), g1, g2, aic if aic is not None and math.isfinite(aic) else None]


def bundle_from_dict(b):
    """``(scheme, WindowFit | None, window_index, error)`` from a fit bundle."""
    w = harness.Window(tuple(b["window"]["train"]), int(b["window"]["test"]))
    if b.get("error") or b.get("model") is None:
        return b["scheme"], None, w, int(b["window"]["index"]), b.get("error") or "no model"
    a = b["assignment"]
    rule = None if a["rule"] is None else LabelRule.from_dict(a["rule"])
    assignment = ClassificationAssignment(a["scheme"], {}, tuple(a["categories"]), (), rule)
    wf = harness.WindowFit(w, ThresholdResult.from_dict(b["threshold"]), assignment,
                           gamlss.FittedSeverityModel.from_dict(b["model"]),
                           tuple(tuple(p) for p in b.get("knot_path", [])), list(b.get("notes", [])))
    return b["scheme"], wf, w, int(b["window"]["index"]), None


def _load_bundle(path):
    if not os.path.exists(path):
        raise CliError(f"fit bundle not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return bundle_from_dict(json.load(fh))


def _bundle_paths(items):
    paths = []
    for item in items:
        if os.path.isdir(item):
            paths += sorted(str(p) for p in Path(item).rglob("window_*.json"))
        elif os.path.exists(item):
            paths.append(item)
        else:
            raise CliError(f"fit bundle not found: {item}")
    if not paths:
        raise CliError("no fit bundles found")
    return paths


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out):
    """Write a synthetic dataset ``events.csv``."""
    run = _Run("simulate", cfg, out)
    d = synth_generate(cfg.synth)
    path = run.out / "events.csv"
    d.to_csv(path)
    _dump_json(cfg.synth.to_dict(), run.out / "synth_config.json")
    run.output(path)
    run.output(run.out / "synth_config.json")
    return run.finish()


def cmd_classify(cfg: RunConfig, data, schemes, out):
    """Build the requested schemes on the whole dataset; one assignment CSV each."""
    run = _Run("classify", cfg, out, {"schemes": _schemes(schemes)})
    run.input("data", data)
    d = _load_data(data)
    adir = run.out / "assignments"
    adir.mkdir(exist_ok=True)
    p = cfg.pipeline
    for name in _schemes(schemes):
        opts = {"Tail": {"alpha": p.merge_alpha}, "Body": {"alpha": p.merge_alpha},
                "Random": {"k": p.random_k}}.get(name, {})
        a = build_scheme(name, d, seed=p.seed, **opts)
        path = adir / f"{name}.csv"
        a.to_csv(path)
        run.output(path)
    return run.finish()


def _thresholds(d, data_digest, plan, cfg: harness.PipelineConfig, cache):
    """Window thresholds, reused from ``cache`` when data and settings match."""
    key = {"data": data_digest, "seed": cfg.seed, "n_boot": cfg.n_boot,
           "windows": [[list(w.train), w.test] for w in plan]}
    if cache.exists():
        with open(cache, encoding="utf-8") as fh:
            stored = json.load(fh)
        if stored.get("key") == key:
            return {w: (ThresholdResult.from_dict(t) if t is not None else ValueError(e))
                    for w, t, e in zip(plan, stored["thresholds"], stored["errors"])}
    th = harness.window_thresholds(d, plan, cfg)
    _dump_json({"key": key,
                "thresholds": [None if isinstance(th[w], Exception) else th[w].to_dict() for w in plan],
                "errors": [str(th[w]) if isinstance(th[w], Exception) else None for w in plan]}, cache)
    return th


def _parse_train(text):
    try:
        a, b = (int(x) for x in text.replace("-", ":").split(":"))
    except ValueError:
        raise CliError(f"--train expects FIRST:LAST, got {text!r}") from None
    return a, b


def cmd_fit(cfg: RunConfig, data, out, schemes=None, assignment=None, train=None):
    """Fit one bundle per (scheme, window).

    Without ``train`` every window of the rolling plan is fitted; ``train``
    (``(first, last)``) selects a single window. A fixed ``assignment`` file
    replaces the per-window rebuild of the scheme.
    """
    p = cfg.pipeline
    run = _Run("fit", cfg, out, {"train": None if train is None else list(train)})
    run.input("data", data)
    d = _load_data(data)
    fixed = None
    if assignment is not None:
        run.input("assignment", assignment)
        fixed = ClassificationAssignment.from_csv(assignment)
        names = [fixed.scheme_name]
    else:
        names = _schemes(schemes)
    span = d.span
    if span is None:
        raise CliError("dataset is empty")
    plan = harness.make_window_plan(span, p.window_length, p.step)
    if train is not None:
        train = tuple(int(x) for x in train)
        if train[1] - train[0] + 1 != p.window_length:
            raise CliError(f"training window {train} does not span {p.window_length} years")
        sel = [w for w in plan if w.train == train]
        if not sel:
            raise CliError(f"training window {train} is not part of the plan for {span}")
    else:
        sel = list(plan)
    index = {w: i for i, w in enumerate(plan)}
    fdir = run.out / "fits"
    th = _thresholds(d, run.manifest.inputs["data"]["sha256"], plan, p, fdir.parent / "thresholds.json")
    run.output(fdir.parent / "thresholds.json")
    for name in names:
        sdir = fdir / name
        sdir.mkdir(parents=True, exist_ok=True)
        for w in sel:
            i = index[w]
            wf, err = None, None
            if isinstance(th[w], Exception):
                err = f"threshold selection failed: {th[w]}"
            else:
                try:
                    wf = harness.fit_window(d, name, w, p, th[w], i, fixed)
                except Exception as exc:  # noqa: BLE001 - recorded in the bundle
                    err = f"{type(exc).__name__}: {exc}"
            if err:
                log.warning("%s window %s: %s", name, w.test, err)
            path = sdir / f"window_{w.test}.json"
            _dump_json(bundle_to_dict(name, wf, w, i, th[w], err), path)
            run.output(path)
    return run.finish()


def cmd_score(cfg: RunConfig, data, models, out):
    """Score test-year exceedances with every fit bundle in ``models``."""
    p = cfg.pipeline
    run = _Run("score", cfg, out)
    run.input("data", data)
    d = _load_data(data)
    paths = _bundle_paths(models)
    for k, path in enumerate(paths):
        run.input(f"model_{k}", path)
    sdir = run.out / "scores"
    for path in paths:
        name, wf, w, i, err = _load_bundle(path)
        wdir = sdir / name / str(w.test)
        wdir.mkdir(parents=True, exist_ok=True)
        summary = {"scheme": name, "train": list(w.train), "test": w.test, "error": err}
        if wf is not None:
            res = harness.score_window(d, wf, p, i)
            for (kind, weight), s in sorted(res.scores.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
                f = wdir / f"{kind.value}_{weight.value}.csv"
                s.to_csv(f)
                run.output(f)
            summary.update(n_test=res.n_test, n_below_threshold=res.n_below_threshold,
                           n_excluded=res.n_excluded, notes=res.notes,
                           score_means={f"{k.value}/{wt.value}": s.mean() for (k, wt), s in sorted(
                               res.scores.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))})
        _dump_json(summary, wdir / "summary.json")
        run.output(wdir / "summary.json")
    return run.finish()


def load_score_tree(root):
    """``{scheme: {(kind, weight): {year: ScoreSeries}}}`` from a ``scores`` directory."""
    root = Path(root)
    if not root.is_dir():
        raise CliError(f"score directory not found: {root}")
    tree = {}
    for f in sorted(root.glob("*/*/*.csv")):
        scheme, year = f.parent.parent.name, int(f.parent.name)
        s = ScoreSeries.from_csv(f)
        if s.scheme_name != scheme:
            raise AlignmentError(f"{f}: series belongs to {s.scheme_name}, not {scheme}")
        tree.setdefault(scheme, {}).setdefault((s.kind, s.weight), {})[year] = s
    if not tree:
        raise CliError(f"no score files under {root}")
    return tree


def _merge_trees(roots):
    tree = {}
    for r in roots:
        for scheme, by_key in load_score_tree(r).items():
            for key, by_year in by_key.items():
                dst = tree.setdefault(scheme, {}).setdefault(key, {})
                clash = set(dst) & set(by_year)
                if clash:
                    raise AlignmentError(f"duplicate scores for {scheme} {key[0].value}/{key[1].value} "
                                         f"in years {sorted(clash)}")
                dst.update(by_year)
    return tree


def cmd_test(cfg: RunConfig, scores, baseline, out):
    """Overall statistics and yearly rejection proportions against ``baseline``."""
    run = _Run("test", cfg, out, {"baseline": baseline})
    tree = _merge_trees(scores)
    if baseline not in tree:
        raise CliError(f"baseline {baseline!r} has no scores; found {sorted(tree)}")
    tables = harness.compare_series(tree, baseline)
    tdir = run.out / "tables"
    tdir.mkdir(exist_ok=True)
    for path in tables.to_csv(tdir):
        run.output(path)
    detail = [{"scheme": s, "kind": k.value, "weight": w.value, "overall": tables.overall[(s, k, w)].to_dict(),
               "yearly": {str(y): t.to_dict() for y, t in tables.yearly_tests.get((s, k, w), {}).items()}}
              for (s, k, w) in tables.overall]
    _dump_json(detail, tdir / "tests.json")
    run.output(tdir / "tests.json")
    return run.finish()


def cmd_power(cfg: RunConfig, model, baseline_model, data, out, sizes=None, n_rep=None):
    """Power table of the model against the baseline on its test-year exceedances."""
    pc = cfg.power
    sizes = tuple(sizes or pc.get("sizes", harness.POWER_SIZES))
    n_rep = int(n_rep or pc.get("n_rep", 10_000))
    kind = ScoreKind(pc.get("kind", ScoreKind.RCRPS.value))
    run = _Run("power", cfg, out, {"sizes": list(sizes), "n_rep": n_rep, "kind": kind.value})
    run.input("data", data)
    run.input("model", model)
    run.input("baseline_model", baseline_model)
    d = _load_data(data)
    _, wf1, w1, _, e1 = _load_bundle(model)
    _, wf0, w0, _, e0 = _load_bundle(baseline_model)
    if e1 or e0:
        raise CliError(f"cannot run the power study on a failed fit: {e1 or e0}")
    if w1 != w0:
        raise AlignmentError(f"model and baseline were fitted on different windows ({w1} vs {w0})")
    test = d.years(w1.test, w1.test)
    a1, a0 = wf1.assignment.apply(test), wf0.assignment.apply(test)
    u = wf1.threshold.u
    keep = a1.included(test) & a0.included(test) & (test.loss > u)
    ev = test.subset(keep)
    if len(ev) == 0:
        raise CliError(f"no exceedances in test year {w1.test}")
    table = harness.power_study(wf1.model, wf0.model, ev, a1.apply(ev), a0.apply(ev), sizes=sizes,
                                n_rep=n_rep, n_draws_per_event=int(pc.get("n_draws_per_event", 1000)),
                                seed=cfg.seed, kind=kind, beta=float(pc.get("beta", cfg.pipeline.beta)))
    path = run.out / f"power_{kind.value}.csv"
    table.to_csv(path)
    _dump_json(table.to_dict(), run.out / f"power_{kind.value}.json")
    run.output(path)
    run.output(run.out / f"power_{kind.value}.json")
    return run.finish()


def _resolve(manifest_path, p):
    return p if os.path.isabs(p) else os.path.join(os.path.dirname(os.path.abspath(manifest_path)), p)


def cmd_report(cfg: RunConfig, manifest, out, baseline="None", quantiles=TRIM_QUANTILES):
    """Plot-data CSVs from the outputs listed in a ``score`` manifest.

    ``yearly_scores.csv``: mean score per scheme, kind, weight and test year
    with its natural log. ``trimmed_<kind>_<weight>.csv``: trimmed comparison
    statistics against ``baseline`` per scheme and quantile, with the 1.64
    reference line.
    """
    m = RunManifest.load(manifest)
    if m.command != "score":
        raise CliError(f"report needs a score manifest, got {m.command!r}")
    run = _Run("report", cfg, out, {"baseline": baseline, "quantiles": list(quantiles)})
    run.input("manifest", manifest)
    data = _resolve(manifest, m.inputs["data"]["path"])
    if sha256_file(data) != m.inputs["data"]["sha256"]:
        raise CliError(f"{data} changed since it was scored")
    d = _load_data(data)
    tree = {}
    for rel in m.outputs:
        if rel.endswith(".csv"):
            f = Path(_resolve(manifest, rel))
            s = ScoreSeries.from_csv(f)
            tree.setdefault(s.scheme_name, {}).setdefault((s.kind, s.weight), {})[int(f.parent.name)] = s
    rdir = run.out / "report"
    rdir.mkdir(exist_ok=True)
    path = rdir / "yearly_scores.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scheme", "kind", "weight", "year", "n", "mean", "log_mean"])
        for scheme in sorted(tree):
            for (kind, weight) in sorted(tree[scheme], key=lambda k: (k[0].value, k[1].value)):
                for year, s in sorted(tree[scheme][(kind, weight)].items()):
                    mean = s.mean()
                    wr.writerow([scheme, kind.value, weight.value, year, len(s), repr(mean),
                                 repr(math.log(mean)) if mean > 0 else ""])
    run.output(path)
    if baseline in tree:
        pos = {eid: i for i, eid in enumerate(d.ids)}
        from .inference import trimmed_test

        for key in sorted(tree[baseline], key=lambda k: (k[0].value, k[1].value)):
            path = rdir / f"trimmed_{key[0].value}_{key[1].value}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh)
                wr.writerow(["scheme", "quantile", "n", "statistic", "reference"])
                by = tree[baseline][key]
                for scheme in sorted(tree):
                    if scheme == baseline or key not in tree[scheme]:
                        continue
                    common = sorted(set(tree[scheme][key]) & set(by))
                    if not common:
                        continue
                    s = harness._pool({yr: tree[scheme][key][yr] for yr in common})
                    b = harness._align(s, harness._pool({yr: by[yr] for yr in common}))
                    y = d.loss[[pos[e] for e in s.event_ids]]
                    for q, r in trimmed_test(s, b, y, quantiles).items():
                        wr.writerow([scheme, q, r.n, repr(r.statistic), CRIT_05])
            run.output(path)
    else:
        log.info("baseline %s not scored; trimmed paths skipped", baseline)
    return run.finish()


def cmd_demo(cfg: RunConfig, out):
    """simulate, classify, fit, score, test and report into one directory."""
    out = Path(out)
    cmd_simulate(cfg, out)
    data = str(out / "events.csv")
    schemes = list(cfg.pipeline.schemes)
    cmd_classify(cfg, data, schemes, out)
    cmd_fit(cfg, data, out, schemes=schemes)
    cmd_score(cfg, data, [str(out / "fits")], out)
    baseline = "None" if "None" in schemes else schemes[0]
    cmd_test(cfg, [str(out / "scores")], baseline, out)
    return cmd_report(cfg, str(out / "manifest_score.json"), out, baseline=baseline)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with optional 'synth', 'pipeline' and 'power' sections")
    common.add_argument("--seed", type=int, help="overrides every seed of the config")
    common.add_argument("--threads", type=int, default=1, help="worker cap (execution is sequential)")
    common.add_argument("--out", default=".", help="output directory")

    p = argparse.ArgumentParser(prog="taxoscore", description="Severity-model scoring of loss classifications.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    c = sub.add_parser("classify", parents=[common], help="build classification schemes")
    c.add_argument("--data", required=True)
    c.add_argument("--scheme", nargs="+", default=["all"])
    f = sub.add_parser("fit", parents=[common], help="fit window models")
    f.add_argument("--data", required=True)
    g = f.add_mutually_exclusive_group()
    g.add_argument("--scheme", nargs="+")
    g.add_argument("--assignment", help="fixed assignment CSV from 'classify'")
    f.add_argument("--train", help="single training window FIRST:LAST (default: every window)")
    s = sub.add_parser("score", parents=[common], help="score test years")
    s.add_argument("--data", required=True)
    s.add_argument("--models", nargs="+", required=True, help="fit bundles or directories of bundles")
    t = sub.add_parser("test", parents=[common], help="compare schemes against a baseline")
    t.add_argument("--scores", nargs="+", required=True, help="score directories")
    t.add_argument("--baseline", default="None")
    w = sub.add_parser("power", parents=[common], help="power study")
    w.add_argument("--model", required=True)
    w.add_argument("--baseline-model", required=True)
    w.add_argument("--data", required=True)
    w.add_argument("--sizes", type=int, nargs="+")
    w.add_argument("--n-rep", type=int)
    r = sub.add_parser("report", parents=[common], help="plot-data CSVs")
    r.add_argument("--manifest", required=True, help="manifest_score.json of a score run")
    r.add_argument("--baseline", default="None")
    sub.add_parser("demo", parents=[common], help="run every stage on simulated data")
    return p


def _dispatch(a, cfg):
    if a.command == "simulate":
        return cmd_simulate(cfg, a.out)
    if a.command == "classify":
        return cmd_classify(cfg, a.data, a.scheme, a.out)
    if a.command == "fit":
        return cmd_fit(cfg, a.data, a.out, a.scheme, a.assignment, None if a.train is None else _parse_train(a.train))
    if a.command == "score":
        return cmd_score(cfg, a.data, a.models, a.out)
    if a.command == "test":
        return cmd_test(cfg, a.scores, a.baseline, a.out)
    if a.command == "power":
        return cmd_power(cfg, a.model, a.baseline_model, a.data, a.out, a.sizes, a.n_rep)
    if a.command == "report":
        return cmd_report(cfg, a.manifest, a.out, a.baseline)
    return cmd_demo(cfg, a.out)


def main(argv=None):
    a = build_parser().parse_args(argv)
    level = os.environ.get("TAXOSCORE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.threads is not None and a.threads < 1:
        a.threads = 1
    try:
        cfg = RunConfig.load(a.config, a.seed)
        m = _dispatch(a, cfg)
    except (CliError, SchemaError, AlignmentError, ValueError, KeyError, OSError) as exc:
        _fail(a.command, exc, 2)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure leaves as JSON
        _fail(a.command, exc, 1)
        return 1
    print(json.dumps({"command": m.command, "outputs": len(m.outputs)}))
    return 0


def _fail(command, exc, code):
    msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(msg), "command": command,
                                 "exit_code": code}) + "\n")


if __name__ == "__main__":
    raise SystemExit(main())
