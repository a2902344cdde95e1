"""Risk-type classification schemes and the two baselines.

Every builder returns a :class:`ClassificationAssignment` carrying a
:class:`LabelRule`, so a scheme built on a training window can label the
events of the following year through :meth:`ClassificationAssignment.apply`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data_model import ADVISEN_TYPES, OTHER_TYPE, Dataset
from .inference import two_sample_distance_test

log = logging.getLogger(__name__)

SCHEMES = ("Advisen", "Romanosky", "Eling", "FrequencySeverity", "TypeImportance", "Tail", "Body",
           "Random", "None")
DYNAMIC_SCHEMES = ("FrequencySeverity", "TypeImportance", "Tail", "Body", "Random")


class VocabularyError(ValueError):
    """Label outside the closed Advisen vocabulary."""


class DegenerateMatrixError(ValueError):
    """Too few distinct risk types to form a risk matrix."""


_ROMANOSKY = {
    "Privacy - Unauthorized Contact or Disclosure": "Privacy Violation",
    "Privacy - Unauthorized Data Collection": "Privacy Violation",
    "Data - Physically Lost or Stolen": "Data Breach",
    "Identity - Fraudulent Use/Account Access": "Data Breach",
    "Data - Malicious Breach": "Data Breach",
    "Phishing, Spoofing, Social Engineering": "Phishing Skimming",
    "IT - Configuration/Implementation Errors": "Security Incident",
    "Data - Unintentional Disclosure": "Data Breach",
    "Cyber Extortion": "Security Incident",
    "Network/Website Disruption": "Security Incident",
    "Skimming, Physical Tampering": "Phishing Skimming",
    "IT - Processing Errors": "Security Incident",
    "Industrial Controls & Operations": "Security Incident",
    OTHER_TYPE: "Other",
}
_ELING = {
    "Privacy - Unauthorized Contact or Disclosure": "System and Technical Failure",
    "Privacy - Unauthorized Data Collection": "System and Technical Failure",
    "Data - Physically Lost or Stolen": "Actions by People",
    "Identity - Fraudulent Use/Account Access": "System and Technical Failure",
    "Data - Malicious Breach": "Actions by People",
    "Phishing, Spoofing, Social Engineering": "Actions by People",
    "IT - Configuration/Implementation Errors": "Failed Internal Process",
    "Data - Unintentional Disclosure": "Actions by People",
    "Cyber Extortion": "Actions by People",
    "Network/Website Disruption": "Failed Internal Process",
    "Skimming, Physical Tampering": "Actions by People",
    "IT - Processing Errors": "Failed Internal Process",
    "Industrial Controls & Operations": "System and Technical Failure",
    OTHER_TYPE: "Other",
}
_EVENT_CLASS = {
    "Privacy - Unauthorized Contact or Disclosure": "Low Level",
    "Privacy - Unauthorized Data Collection": "Low Level",
    "Data - Physically Lost or Stolen": "Exfiltration",
    "Identity - Fraudulent Use/Account Access": "Exfiltration",
    "Data - Malicious Breach": "Exfiltration",
    "Phishing, Spoofing, Social Engineering": "Low Level",
    "IT - Configuration/Implementation Errors": "Disruption",
    "Data - Unintentional Disclosure": "Low Level",
    "Cyber Extortion": "Exfiltration",
    "Network/Website Disruption": "Disruption",
    "Skimming, Physical Tampering": "Exfiltration",
    "IT - Processing Errors": "Disruption",
    "Industrial Controls & Operations": "Disruption",
    OTHER_TYPE: None,
}
_TABLES = {"Romanosky": _ROMANOSKY, "Eling": _ELING, "TypeImportanceEventClass": _EVENT_CLASS}
_VOCAB = {
    "Romanosky": ("Data Breach", "Security Incident", "Privacy Violation", "Phishing Skimming", "Other"),
    "Eling": ("Actions by People", "System and Technical Failure", "Failed Internal Process",
              "External Event", "Other"),
}

FREQUENCY_BANDS = ("Rare", "Unlikely", "Likely")
SEVERITY_BANDS = ("Low Severity", "Medium Severity", "High Severity")
EVENT_CLASSES = ("Low Level", "Exfiltration", "Disruption")
IMPORTANCE_BANDS = ("Low Importance", "Medium Importance", "High Importance")


def map_advisen(target, advisen_type):
    """Category of ``advisen_type`` under ``target``.

    ``target`` is ``"Romanosky"``, ``"Eling"`` or ``"TypeImportanceEventClass"``;
    the last returns ``None`` for the undetermined type, which that scheme
    excludes.
    """
    if target not in _TABLES:
        raise ValueError(f"unknown mapping target {target!r}")
    if advisen_type not in _TABLES[target]:
        raise VocabularyError(f"unknown Advisen risk type {advisen_type!r}")
    return _TABLES[target][advisen_type]


# --------------------------------------------------------------------------
# assignments
# --------------------------------------------------------------------------

def _hash_unit(seed, event_id):
    digest = hashlib.blake2b(f"{seed}:{event_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0 ** 64


@dataclass(frozen=True)
class LabelRule:
    """How a scheme labels events.

    kinds: ``risk_type`` (``table`` maps Advisen type to label, ``None`` =
    excluded), ``type_importance`` (``table`` maps sector to importance band,
    ``default`` is used for sectors unseen when the rule was built),
    ``random`` (hash of seed and event id) and ``constant``.
    """

    kind: str
    table: dict = field(default_factory=dict)
    default: str | None = None
    seed: int = 0
    k: int = 1

    def labels(self, d: Dataset):
        if self.kind == "risk_type":
            return np.array([self.table.get(rt) for rt in d.risk_type], dtype=object)
        if self.kind == "type_importance":
            out = []
            for rt, sec in zip(d.risk_type, d.sector):
                cls = _EVENT_CLASS[rt]
                out.append(None if cls is None else f"{cls}-{self.table.get(sec, self.default)}")
            return np.array(out, dtype=object)
        if self.kind == "random":
            idx = [min(int(_hash_unit(self.seed, eid) * self.k), self.k - 1) for eid in d.ids]
            return np.array([f"R{i + 1}" for i in idx], dtype=object)
        if self.kind == "constant":
            return np.full(len(d), self.default, dtype=object)
        raise ValueError(f"unknown rule kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "table": dict(self.table), "default": self.default,
                "seed": self.seed, "k": self.k}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d.get("table", {})), d.get("default"), d.get("seed", 0), d.get("k", 1))


@dataclass(frozen=True)
class ClassificationAssignment:
    """Labels of one scheme: ``labels`` maps event id to category.

    Events the scheme excludes are absent from ``labels`` and listed in
    ``excluded``.
    """

    scheme_name: str
    labels: dict
    categories: tuple
    excluded: tuple = ()
    rule: LabelRule | None = None

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "excluded", tuple(self.excluded))
        vocab = set(self.categories)
        bad = {v for v in self.labels.values() if v not in vocab}
        if bad:
            raise ValueError(f"labels outside the vocabulary: {sorted(map(str, bad))}")

    def __len__(self):
        return len(self.labels)

    def for_dataset(self, d: Dataset):
        """Labels aligned with ``d``; ``None`` for excluded or unknown events."""
        return np.array([self.labels.get(eid) for eid in d.ids], dtype=object)

    def included(self, d: Dataset):
        return np.array([eid in self.labels for eid in d.ids], dtype=bool)

    def counts(self, d: Dataset | None = None):
        vals = list(self.labels.values()) if d is None else [v for v in self.for_dataset(d) if v is not None]
        return np.array([sum(1 for v in vals if v == c) for c in self.categories], dtype=int)

    def apply(self, d: Dataset):
        """Label the events of ``d`` with this scheme's rule (same vocabulary)."""
        if self.rule is None:
            raise ValueError(f"scheme {self.scheme_name} has no labelling rule")
        return _from_labels(self.scheme_name, d, self.rule.labels(d), self.categories, self.rule)

    def extend(self, d: Dataset):
        """Union of this assignment and its rule applied to ``d``."""
        new = self.apply(d)
        labels = dict(self.labels)
        labels.update(new.labels)
        return ClassificationAssignment(self.scheme_name, labels, self.categories,
                                        tuple(dict.fromkeys(self.excluded + new.excluded)), self.rule)

    def rename(self, mapping):
        """Same partition with categories renamed through ``mapping``."""
        rule = None
        if self.rule is not None and self.rule.kind == "risk_type":
            rule = LabelRule("risk_type", {k: (None if v is None else mapping[v]) for k, v in self.rule.table.items()})
        return ClassificationAssignment(self.scheme_name, {k: mapping[v] for k, v in self.labels.items()},
                                        tuple(mapping[c] for c in self.categories), self.excluded, rule)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["event_id", "label"])
            for eid, lab in self.labels.items():
                writer.writerow([eid, lab])
        meta = {"scheme": self.scheme_name, "categories": list(self.categories),
                "excluded": list(self.excluded), "rule": None if self.rule is None else self.rule.to_dict()}
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, path):
        with open(str(path) + ".json", encoding="utf-8") as fh:
            meta = json.load(fh)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            if next(reader) != ["event_id", "label"]:
                raise ValueError(f"{path}: expected header 'event_id,label'")
            labels = {row[0]: row[1] for row in reader}
        rule = None if meta.get("rule") is None else LabelRule.from_dict(meta["rule"])
        return cls(meta["scheme"], labels, tuple(meta["categories"]), tuple(meta.get("excluded", ())), rule)


def _from_labels(name, d, labels, categories, rule):
    keep = {eid: lab for eid, lab in zip(d.ids, labels) if lab is not None}
    excluded = tuple(eid for eid, lab in zip(d.ids, labels) if lab is None)
    return ClassificationAssignment(name, keep, categories, excluded, rule)


def advisen_classification(d: Dataset):
    rule = LabelRule("risk_type", {t: t for t in ADVISEN_TYPES})
    return _from_labels("Advisen", d, rule.labels(d), ADVISEN_TYPES, rule)


def mapped_classification(d: Dataset, target):
    """Romanosky or Eling scheme through the fixed mapping table."""
    if target not in _VOCAB:
        raise ValueError("target must be 'Romanosky' or 'Eling'")
    rule = LabelRule("risk_type", dict(_TABLES[target]))
    return _from_labels(target, d, rule.labels(d), _VOCAB[target], rule)


def none_classification(d: Dataset):
    rule = LabelRule("constant", default="All")
    return _from_labels("None", d, rule.labels(d), ("All",), rule)


def random_classification(d: Dataset, k=4, seed=0):
    """Uniform i.i.d. labels ``R1..Rk``; each event's label depends only on ``(seed, id)``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    rule = LabelRule("random", seed=int(seed), k=int(k))
    return _from_labels("Random", d, rule.labels(d), tuple(f"R{i + 1}" for i in range(k)), rule)


# --------------------------------------------------------------------------
# risk matrices
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RiskMatrixSpec:
    row_breaks: tuple = (0.33, 0.66)
    col_breaks: tuple = (0.33, 0.66)

    def __post_init__(self):
        for br in (self.row_breaks, self.col_breaks):
            if len(br) != 2 or not 0 < br[0] < br[1] < 1:
                raise ValueError("breaks must be two strictly increasing values in (0, 1)")


def _band(position, breaks):
    # a position equal to a break belongs to the upper band
    return int(np.searchsorted(np.asarray(breaks), position, side="right"))


def _rank_positions(values):
    """Share of items with a strictly smaller value (ties share a position)."""
    v = np.asarray(values, dtype=float)
    return np.array([(v < x).sum() for x in v]) / v.size


def build_frequency_severity(d: Dataset, matrix: RiskMatrixSpec = RiskMatrixSpec()):
    """Frequency (event count) by severity (median loss) risk matrix over risk types.

    A risk type's position on each axis is the share of risk types with a
    strictly smaller metric; positions below the first break form the lowest
    band and a position equal to a break belongs to the upper band.
    """
    types = [t for t in ADVISEN_TYPES if np.any(d.risk_type == t)]
    if len(types) < 3:
        raise DegenerateMatrixError(f"need at least 3 risk types, found {len(types)}")
    counts = [int(np.sum(d.risk_type == t)) for t in types]
    medians = [float(np.median(d.loss[d.risk_type == t])) for t in types]
    f_pos = _rank_positions(counts)
    s_pos = _rank_positions(medians)
    table = {}
    for t, fp, sp in zip(types, f_pos, s_pos):
        table[t] = f"{FREQUENCY_BANDS[_band(fp, matrix.row_breaks)]}-{SEVERITY_BANDS[_band(sp, matrix.col_breaks)]}"
    categories = tuple(f"{f}-{s}" for f in FREQUENCY_BANDS[::-1] for s in SEVERITY_BANDS)
    rule = LabelRule("risk_type", table)
    return _from_labels("FrequencySeverity", d, rule.labels(d), categories, rule)


def sector_importance(d: Dataset, matrix: RiskMatrixSpec = RiskMatrixSpec()):
    """Importance band per sector from its median loss; ties ordered by sector label."""
    sectors = sorted(set(d.sector))
    if not sectors:
        raise DegenerateMatrixError("no sectors present")
    med = {s: float(np.median(d.loss[d.sector == s])) for s in sectors}
    order = sorted(sectors, key=lambda s: (med[s], s))
    k = len(order)
    return {s: IMPORTANCE_BANDS[_band(i / k, matrix.col_breaks)] for i, s in enumerate(order)}


def build_type_importance(d: Dataset, matrix: RiskMatrixSpec = RiskMatrixSpec()):
    """Event class by sector importance; undetermined events are excluded.

    Sectors unseen when the scheme was built fall into the medium band.
    """
    importance = sector_importance(d, matrix)
    rule = LabelRule("type_importance", importance, default=IMPORTANCE_BANDS[1])
    categories = tuple(f"{c}-{i}" for c in EVENT_CLASSES for i in IMPORTANCE_BANDS)
    return _from_labels("TypeImportance", d, rule.labels(d), categories, rule)


# --------------------------------------------------------------------------
# residual-based schemes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MergeStep:
    merged: tuple
    distance: float
    p_value: float


def merge_groups(samples: dict, alpha=0.05, test="KS", n_boot=2_000, seed=0, min_size=5):
    """Greedy agglomeration of residual samples.

    Groups smaller than ``min_size`` are first absorbed by the group with the
    nearest KS distance. Then the pair with the smallest distance among pairs
    whose test does not reject at ``alpha`` is merged, until every pair
    rejects. Returns ``(groups, steps)`` with ``groups`` a list of key tuples.
    """
    groups = [((k,), np.asarray(v, float)) for k, v in samples.items() if len(v) > 0]
    steps = []
    if not groups:
        return [], steps
    while len(groups) > 1:
        small = [i for i, (_, r) in enumerate(groups) if r.size < min_size]
        if not small:
            break
        i = min(small, key=lambda j: groups[j][1].size)
        others = [j for j in range(len(groups)) if j != i]
        j = min(others, key=lambda j: stats.ks_2samp(groups[i][1], groups[j][1]).statistic)
        dist = float(stats.ks_2samp(groups[i][1], groups[j][1]).statistic)
        steps.append(MergeStep(groups[i][0] + groups[j][0], dist, float("nan")))
        groups = _merge(groups, i, j)
    rng_seed = 0
    while len(groups) > 1:
        best = None
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                dist, p = two_sample_distance_test(groups[i][1], groups[j][1], test, n_boot=n_boot,
                                                   seed=(seed, rng_seed, i, j) if test.upper() == "CVM" else seed)
                if p >= alpha and (best is None or dist < best[0]):
                    best = (dist, p, i, j)
        rng_seed += 1
        if best is None:
            break
        dist, p, i, j = best
        steps.append(MergeStep(groups[i][0] + groups[j][0], dist, p))
        groups = _merge(groups, i, j)
    return [g for g, _ in groups], steps


def _merge(groups, i, j):
    merged = (groups[i][0] + groups[j][0], np.concatenate([groups[i][1], groups[j][1]]))
    rest = [g for k, g in enumerate(groups) if k not in (i, j)]
    return [merged] + rest


def _fit_labels(data, types, min_count):
    """Risk-type labels for the residual model.

    Types with fewer than ``min_count`` events share the most frequent
    type's dummy: one lognormal observation has an unbounded likelihood. The
    residuals of those events still enter the merge under their own type.
    """
    counts = {t: int(np.sum(data.risk_type == t)) for t in types}
    present = [t for t in types if counts[t] >= min_count]
    if not present:
        present = [max(types, key=lambda t: counts[t])]
    top = max(present, key=lambda t: counts[t])
    labels = np.array([t if t in present else top for t in data.risk_type], dtype=object)
    return _from_labels("Advisen", data, labels, present, None)


def build_residual_classification(d: Dataset, family="GPD", alpha=0.05, test="KS", threshold=None,
                                  n_boot=2_000, seed=0):
    """Tail (GPD) or Body (lognormal) scheme from merged risk-type residuals.

    A model with risk-type dummies only is fitted (GPD on the exceedances over
    ``threshold``, selected from ``d`` when omitted; lognormal on all
    losses). Residuals are grouped by risk type and merged by
    :func:`merge_groups`. Groups are named ``Type 1``, ``Type 2``, ... by
    decreasing size. Risk types without residuals go to ``Type 1``;
    undetermined events are excluded.
    """
    from . import gamlss
    from .evt_gpd import select_threshold

    if family not in gamlss.FAMILIES:
        raise ValueError(f"family must be one of {gamlss.FAMILIES}")
    types = [t for t in ADVISEN_TYPES if t != OTHER_TYPE]
    sub = d.subset(np.isin(d.risk_type, types))
    spec = gamlss.CovariateSpec(terms=("scheme",))
    if family == gamlss.GPD:
        if threshold is None:
            threshold = select_threshold(sub.loss, n_boot=200, seed=seed, stop_at_first=True).u
        data = sub.subset(sub.loss > threshold)
    else:
        data = sub
    base = _fit_labels(data, types, spec.min_category)
    design = gamlss.build_design(data, spec, base)
    if family == gamlss.GPD:
        model = gamlss.fit(data.loss - threshold, design, spec, threshold=threshold)
    else:
        model = gamlss.fit_lognormal(data.loss, design, spec)
    r = gamlss.residuals(model, data, base)
    samples = {t: r[data.risk_type == t] for t in types}
    groups, steps = merge_groups(samples, alpha=alpha, test=test, n_boot=n_boot, seed=seed)
    groups.sort(key=lambda g: (-sum(samples[t].size for t in g), min(types.index(t) for t in g)))
    names = tuple(f"Type {i + 1}" for i in range(len(groups)))
    table = {t: names[i] for i, g in enumerate(groups) for t in g}
    for t in types:
        table.setdefault(t, names[0] if names else None)
    table[OTHER_TYPE] = None
    rule = LabelRule("risk_type", table)
    name = "Tail" if family == gamlss.GPD else "Body"
    out = _from_labels(name, d, rule.labels(d), names, rule)
    log.info("%s scheme: %d groups after %d merges", name, len(names), len(steps))
    return out


def build_scheme(name, d: Dataset, seed=0, **options):
    """Dispatch to the builder of scheme ``name`` (one of :data:`SCHEMES`)."""
    if name == "Advisen":
        return advisen_classification(d)
    if name in ("Romanosky", "Eling"):
        return mapped_classification(d, name)
    if name == "FrequencySeverity":
        return build_frequency_severity(d)
    if name == "TypeImportance":
        return build_type_importance(d)
    if name == "Tail":
        return build_residual_classification(d, "GPD", seed=seed, **options)
    if name == "Body":
        opts = {k: v for k, v in options.items() if k != "threshold"}
        return build_residual_classification(d, "Lognormal", seed=seed, **opts)
    if name == "Random":
        return random_classification(d, k=options.get("k", 4), seed=seed)
    if name == "None":
        return none_classification(d)
    raise ValueError(f"unknown scheme {name!r}; choose from {SCHEMES}")
