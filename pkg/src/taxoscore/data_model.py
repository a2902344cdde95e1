"""Loss-event panels: ingestion, filtering, synthesis and descriptive statistics.

CSV layout (default column names, comma separated, header required):

==============  ==========================================================
column          content
==============  ==========================================================
event_id        optional identifier; the 1-based row number when absent
loss_amount     loss in million USD (non-positive values are kept at load)
accident_year   integer calendar year
case_type       Advisen risk type, one of :data:`ADVISEN_TYPES`
naics_sector    business sector label
emp_band        ordinal employee-count band (integer)
rev_band        ordinal revenue band (integer)
us_hq           1 for a US headquarter, else 0
contagion       0 related-same-company, 1 related-other-company, 2 one-shot
==============  ==========================================================

Kurtosis in :func:`descriptive_stats` is excess kurtosis (normal = 0).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .evt_gpd import GpdParams, gpd_sample

log = logging.getLogger(__name__)

ADVISEN_TYPES = (
    "Privacy - Unauthorized Contact or Disclosure",
    "Data - Unintentional Disclosure",
    "Privacy - Unauthorized Data Collection",
    "Data - Malicious Breach",
    "Identity - Fraudulent Use/Account Access",
    "Data - Physically Lost or Stolen",
    "Skimming, Physical Tampering",
    "IT - Processing Errors",
    "Phishing, Spoofing, Social Engineering",
    "IT - Configuration/Implementation Errors",
    "Network/Website Disruption",
    "Cyber Extortion",
    "Industrial Controls & Operations",
    "Undetermined/Other",
)
OTHER_TYPE = "Undetermined/Other"

SECTORS = (
    "Finance and Insurance",
    "Administrative and Support and Waste Management and Remediation Services",
    "Information",
    "Professional, Scientific, and Technical Services",
    "Public Administration",
    "Health Care and Social Assistance",
)

CONTAGION_LEVELS = ("related-same-company", "related-other-company", "one-shot")

DEFAULT_SCHEMA = {
    "event_id": "event_id",
    "loss": "loss_amount",
    "year": "accident_year",
    "risk_type": "case_type",
    "sector": "naics_sector",
    "emp_band": "emp_band",
    "rev_band": "rev_band",
    "us_flag": "us_hq",
    "contagion": "contagion",
}
MANDATORY = ("loss", "year", "risk_type")

_COLUMNS = ("ids", "loss", "year", "risk_type", "sector", "emp_band", "rev_band", "us_flag", "contagion")


class SchemaError(ValueError):
    """Input file lacks a mandatory column."""


@dataclass(frozen=True)
class LossEvent:
    id: str
    loss: float
    year: int
    risk_type: str
    sector: str
    employees_band: int
    revenue_band: int
    us_flag: bool
    contagion: str


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable columnar panel of loss events, sorted by year.

    Within a year events keep their input order.
    """

    ids: np.ndarray
    loss: np.ndarray
    year: np.ndarray
    risk_type: np.ndarray
    sector: np.ndarray
    emp_band: np.ndarray
    rev_band: np.ndarray
    us_flag: np.ndarray
    contagion: np.ndarray
    provenance: dict = field(default_factory=dict)
    rejections: tuple = ()

    def __post_init__(self):
        n = len(self.ids)
        for name in _COLUMNS:
            arr = np.asarray(getattr(self, name))
            if len(arr) != n:
                raise ValueError(f"column {name} has length {len(arr)}, expected {n}")
        order = np.argsort(np.asarray(self.year), kind="stable")
        casts = {"ids": object, "loss": float, "year": int, "risk_type": object, "sector": object,
                 "emp_band": int, "rev_band": int, "us_flag": bool, "contagion": int}
        for name in _COLUMNS:
            arr = np.asarray(getattr(self, name), dtype=casts[name])[order].copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls):
        return cls(*([[]] * len(_COLUMNS)))

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in _COLUMNS)

    @property
    def span(self):
        if len(self) == 0:
            return None
        return int(self.year.min()), int(self.year.max())

    @property
    def events(self):
        return [
            LossEvent(str(self.ids[i]), float(self.loss[i]), int(self.year[i]), str(self.risk_type[i]),
                      str(self.sector[i]), int(self.emp_band[i]), int(self.rev_band[i]),
                      bool(self.us_flag[i]), CONTAGION_LEVELS[int(self.contagion[i])])
            for i in range(len(self))
        ]

    def counts_per_year(self):
        years, counts = np.unique(self.year, return_counts=True)
        return dict(zip(years.tolist(), counts.tolist()))

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        cols = [getattr(self, c)[mask] for c in _COLUMNS]
        return Dataset(*cols, provenance=dict(self.provenance))

    def years(self, first, last):
        return self.subset((self.year >= first) & (self.year <= last))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([DEFAULT_SCHEMA[k] for k in ("event_id", "loss", "year", "risk_type", "sector",
                                                         "emp_band", "rev_band", "us_flag", "contagion")])
            for i in range(len(self)):
                writer.writerow([self.ids[i], repr(float(self.loss[i])), int(self.year[i]), self.risk_type[i],
                                 self.sector[i], int(self.emp_band[i]), int(self.rev_band[i]),
                                 int(self.us_flag[i]), int(self.contagion[i])])


def load_events(path, schema=None, delimiter=","):
    """Read a delimited loss file into a :class:`Dataset`.

    Rows with an unparseable loss or year, or an unknown risk type, are
    skipped and listed in ``dataset.rejections`` as ``(row, reason)`` pairs
    (row numbers count the header as row 1).

    Raises
    ------
    SchemaError
        If a mandatory column (loss, year, risk type) is missing.
    """
    names = dict(DEFAULT_SCHEMA)
    names.update(schema or {})
    cols = {k: [] for k in _COLUMNS}
    rejections = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        missing = [names[k] for k in MANDATORY if names[k] not in header]
        if missing:
            raise SchemaError(f"{path}: missing mandatory column(s) {missing}")
        for rownum, row in enumerate(reader, start=2):
            try:
                loss = float(row[names["loss"]])
                if not np.isfinite(loss):
                    raise ValueError
            except (TypeError, ValueError):
                rejections.append((rownum, "unparseable loss"))
                continue
            try:
                year = int(str(row[names["year"]]).strip())
            except (TypeError, ValueError):
                rejections.append((rownum, "unparseable year"))
                continue
            rt = (row[names["risk_type"]] or "").strip()
            if rt not in ADVISEN_TYPES:
                rejections.append((rownum, "unknown category"))
                continue
            try:
                emp = int(row.get(names["emp_band"]) or 0)
                rev = int(row.get(names["rev_band"]) or 0)
                us = int(row.get(names["us_flag"]) or 0)
                cont = int(row.get(names["contagion"]) or 2)
                if cont not in (0, 1, 2) or us not in (0, 1):
                    raise ValueError
            except (TypeError, ValueError):
                rejections.append((rownum, "invalid covariate"))
                continue
            eid = row.get(names["event_id"]) if names["event_id"] in header else None
            cols["ids"].append(str(eid) if eid not in (None, "") else str(rownum - 1))
            cols["loss"].append(loss)
            cols["year"].append(year)
            cols["risk_type"].append(rt)
            cols["sector"].append((row.get(names["sector"]) or "Unknown").strip())
            cols["emp_band"].append(emp)
            cols["rev_band"].append(rev)
            cols["us_flag"].append(bool(us))
            cols["contagion"].append(cont)
    for rownum, reason in rejections:
        log.info("%s: rejected row %d (%s)", path, rownum, reason)
    return Dataset(*(cols[c] for c in _COLUMNS), provenance={"file": str(path)},
                   rejections=tuple(rejections))


def write_rejections(dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "reason"])
        writer.writerows(dataset.rejections)


def filter_positive_losses(d: Dataset) -> Dataset:
    """Drop events whose recorded loss is not strictly positive."""
    return d.subset(d.loss > 0)


# --------------------------------------------------------------------------
# synthetic panels
# --------------------------------------------------------------------------

# relative frequencies of the Advisen risk types in the published sample
_TYPE_WEIGHTS = (1523, 190, 153, 963, 630, 94, 86, 45, 203, 56, 195, 133, 6, 27)


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for a synthetic panel: lognormal body spliced with a GPD tail.

    The implied threshold is the ``1 - tail_fraction`` quantile of the body
    lognormal; body draws come from that lognormal truncated to ``(0, u]`` and
    tail draws are ``u + GPD(mu_i, tau_i)``. ``log mu_i`` adds the entries of
    ``covariate_effects`` that match the event (keys ``"sector:<label>"``,
    ``"emp_band:<k>"``, ``"rev_band:<k>"``, ``"us_flag:1"``, ``"contagion:<k>"``,
    ``"risk_type:<label>"``) plus ``year_effects[year]``; ``tau_effects`` act the
    same way on ``log tau_i``.
    """

    n_per_year: int = 400
    year_span: tuple = (2008, 2021)
    body_meanlog: float = -1.5
    body_sdlog: float = 1.5
    tail_fraction: float = 0.5
    tail_params: dict = field(default_factory=dict)
    default_tail: tuple = (1.0, 1.2)
    covariate_effects: dict = field(default_factory=dict)
    tau_effects: dict = field(default_factory=dict)
    year_effects: dict = field(default_factory=dict)
    risk_type_weights: tuple = _TYPE_WEIGHTS
    n_bands: int = 4
    us_share: float = 0.8
    contagion_probs: tuple = (0.1, 0.1, 0.8)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.tail_fraction < 1:
            raise ValueError("tail_fraction must lie in (0, 1)")
        if self.n_per_year < 0:
            raise ValueError("n_per_year must be nonnegative")
        if self.year_span[1] < self.year_span[0]:
            raise ValueError("year_span must be (first, last) with first <= last")
        if self.body_sdlog <= 0:
            raise ValueError("body_sdlog must be positive")
        for rt, (mu, tau) in {**self.tail_params, "default": self.default_tail}.items():
            if not (mu > 0 and tau > 0):
                raise ValueError(f"tail parameters for {rt!r} need mu > 0 and tau > 0")
        unknown = set(self.tail_params) - set(ADVISEN_TYPES)
        if unknown:
            raise ValueError(f"unknown risk types in tail_params: {sorted(unknown)}")
        if len(self.risk_type_weights) != len(ADVISEN_TYPES) or min(self.risk_type_weights) < 0:
            raise ValueError("risk_type_weights needs one nonnegative weight per Advisen type")

    @property
    def threshold(self):
        return float(np.exp(self.body_meanlog + self.body_sdlog * stats.norm.ppf(1.0 - self.tail_fraction)))

    def to_dict(self):
        return {
            "n_per_year": self.n_per_year,
            "year_span": list(self.year_span),
            "body_meanlog": self.body_meanlog,
            "body_sdlog": self.body_sdlog,
            "tail_fraction": self.tail_fraction,
            "tail_params": {k: list(v) for k, v in self.tail_params.items()},
            "default_tail": list(self.default_tail),
            "covariate_effects": dict(self.covariate_effects),
            "tau_effects": dict(self.tau_effects),
            "year_effects": {str(k): v for k, v in self.year_effects.items()},
            "risk_type_weights": list(self.risk_type_weights),
            "n_bands": self.n_bands,
            "us_share": self.us_share,
            "contagion_probs": list(self.contagion_probs),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "year_span" in d:
            d["year_span"] = tuple(d["year_span"])
        if "tail_params" in d:
            d["tail_params"] = {k: tuple(v) for k, v in d["tail_params"].items()}
        for key in ("default_tail", "risk_type_weights", "contagion_probs"):
            if key in d:
                d[key] = tuple(d[key])
        if "year_effects" in d:
            d["year_effects"] = {int(k): v for k, v in d["year_effects"].items()}
        return cls(**d)


def _effects(cfg_effects, cols):
    out = np.zeros(len(cols["year"]))
    for key, eff in cfg_effects.items():
        feature, _, level = key.partition(":")
        values = cols[feature]
        if values.dtype == bool:
            match = values == bool(int(level))
        elif np.issubdtype(values.dtype, np.integer):
            match = values == int(level)
        else:
            match = values == level
        out += eff * match
    return out


def synth_generate(cfg: SynthConfig) -> Dataset:
    """Deterministic synthetic panel drawn from ``cfg`` (see :class:`SynthConfig`)."""
    rng = np.random.default_rng(cfg.seed)
    years = np.repeat(np.arange(cfg.year_span[0], cfg.year_span[1] + 1), cfg.n_per_year)
    n = years.size
    w = np.asarray(cfg.risk_type_weights, float)
    cols = {
        "year": years,
        "risk_type": np.asarray(ADVISEN_TYPES, dtype=object)[rng.choice(len(ADVISEN_TYPES), n, p=w / w.sum())],
        "sector": np.asarray(SECTORS, dtype=object)[rng.integers(0, len(SECTORS), n)],
        "emp_band": rng.integers(1, cfg.n_bands + 1, n),
        "rev_band": rng.integers(1, cfg.n_bands + 1, n),
        "us_flag": rng.random(n) < cfg.us_share,
        "contagion": rng.choice(3, n, p=np.asarray(cfg.contagion_probs) / np.sum(cfg.contagion_probs)),
    }
    is_tail = rng.random(n) < cfg.tail_fraction
    u = cfg.threshold
    body = stats.lognorm(s=cfg.body_sdlog, scale=np.exp(cfg.body_meanlog))
    body_draw = body.ppf(rng.random(n) * (1.0 - cfg.tail_fraction))
    base = np.array([cfg.tail_params.get(rt, cfg.default_tail) for rt in cols["risk_type"]], float).reshape(n, 2)
    log_mu = np.log(base[:, 0]) + _effects(cfg.covariate_effects, cols)
    log_mu += np.array([cfg.year_effects.get(int(y), 0.0) for y in years])
    log_tau = np.log(base[:, 1]) + _effects(cfg.tau_effects, cols)
    tail_draw = u + gpd_sample(GpdParams(np.exp(log_mu), np.exp(log_tau)), n, rng)
    loss = np.where(is_tail, tail_draw, np.maximum(body_draw, np.finfo(float).tiny))
    ids = np.array([f"S{y}-{i:06d}" for i, y in enumerate(years)], dtype=object)
    return Dataset(ids, loss, years, cols["risk_type"], cols["sector"], cols["emp_band"],
                   cols["rev_band"], cols["us_flag"], cols["contagion"],
                   provenance={"synthetic": int(cfg.seed), "threshold": u})


# --------------------------------------------------------------------------
# descriptive statistics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StatsRow:
    """One table row; undefined moments are ``None``."""

    group: str
    n: int
    mean: float | None
    median: float | None
    st_dev: float | None
    skew: float | None
    kurt: float | None


def _or_none(x):
    x = float(x)
    return None if not np.isfinite(x) else x


def descriptive_stats(d: Dataset, assignment) -> list[StatsRow]:
    """Per-category loss statistics.

    Standard deviation uses the ``n - 1`` denominator; skewness and excess
    kurtosis are the bias-adjusted sample versions (defined from 3 and 4
    observations respectively). Events the scheme excludes are ignored.
    """
    labels = assignment.for_dataset(d)
    rows = []
    for cat in assignment.categories:
        x = d.loss[labels == cat]
        n = int(x.size)
        if n == 0:
            rows.append(StatsRow(cat, 0, None, None, None, None, None))
            continue
        sd = np.std(x, ddof=1) if n >= 2 else np.nan
        spread = n >= 2 and np.ptp(x) > 0
        sk = stats.skew(x, bias=False) if n >= 3 and spread else np.nan
        ku = stats.kurtosis(x, fisher=True, bias=False) if n >= 4 and spread else np.nan
        rows.append(StatsRow(cat, n, float(np.mean(x)), float(np.median(x)), _or_none(sd),
                             _or_none(sk), _or_none(ku)))
    return rows
