import numpy as np
import pytest

from taxoscore.classifications import (IMPORTANCE_BANDS, SCHEMES, ClassificationAssignment,
                                       DegenerateMatrixError, VocabularyError, _band, build_frequency_severity,
                                       build_residual_classification, build_scheme, build_type_importance,
                                       map_advisen, merge_groups, none_classification, random_classification,
                                       sector_importance)
from taxoscore.data_model import ADVISEN_TYPES, OTHER_TYPE, SECTORS, Dataset, SynthConfig, synth_generate

EXT = "Cyber Extortion"
BREACH = "Data - Malicious Breach"
DISRUPT = "Network/Website Disruption"


def panel(rows, year=2015):
    """Dataset from (risk_type, sector, loss) triples."""
    n = len(rows)
    rt, sec, loss = zip(*rows) if rows else ((), (), ())
    return Dataset([f"e{i}" for i in range(n)], list(loss), [year] * n, list(rt), list(sec), [1] * n, [1] * n,
                   [True] * n, [2] * n)


class TestMappings:
    @pytest.mark.parametrize("target,source,expected", [
        ("Romanosky", EXT, "Security Incident"),
        ("Eling", BREACH, "Actions by People"),
        ("TypeImportanceEventClass", DISRUPT, "Disruption"),
        ("Romanosky", "Skimming, Physical Tampering", "Phishing Skimming"),
        ("Eling", "IT - Processing Errors", "Failed Internal Process"),
        ("TypeImportanceEventClass", OTHER_TYPE, None),
    ])
    def test_table_entries(self, target, source, expected):
        assert map_advisen(target, source) == expected

    def test_every_type_is_mapped(self):
        for target in ("Romanosky", "Eling", "TypeImportanceEventClass"):
            for t in ADVISEN_TYPES:
                map_advisen(target, t)

    def test_unknown_label(self):
        with pytest.raises(VocabularyError):
            map_advisen("Eling", "Alien Invasion")

    def test_scheme_catalogue(self):
        d = synth_generate(SynthConfig(n_per_year=60, year_span=(2010, 2011), seed=0))
        for name in ("Advisen", "Romanosky", "Eling", "FrequencySeverity", "TypeImportance", "Random", "None"):
            a = build_scheme(name, d)
            assert a.scheme_name == name and len(a) + len(a.excluded) == len(d)
        assert len(SCHEMES) == 9
        with pytest.raises(ValueError):
            build_scheme("Astrology", d)


class TestFrequencySeverity:
    def test_top_type_is_likely_high(self):
        rows = [(EXT, "Information", 100.0)] * 30 + [(BREACH, "Information", 2.0)] * 20 + \
               [(DISRUPT, "Information", 1.0)] * 10
        a = build_frequency_severity(panel(rows))
        assert a.labels["e0"] == "Likely-High Severity"

    def test_count_terciles_with_equal_medians(self):
        rows = [(EXT, "Information", 1.0)] * 10 + [(BREACH, "Information", 1.0)] * 20 + \
               [(DISRUPT, "Information", 1.0)] * 30
        a = build_frequency_severity(panel(rows))
        got = {a.rule.table[t] for t in (EXT, BREACH, DISRUPT)}
        assert {g.split("-")[0] for g in got} == {"Rare", "Unlikely", "Likely"}
        # equal medians tie at the lowest rank position
        assert {g.split("-", 1)[1] for g in got} == {"Low Severity"}
        assert a.rule.table[EXT].startswith("Rare") and a.rule.table[DISRUPT].startswith("Likely")

    def test_boundary_is_excluded_from_lower_band(self):
        assert _band(0.33, (0.33, 0.66)) == 1
        assert _band(0.3299, (0.33, 0.66)) == 0

    def test_degenerate(self):
        with pytest.raises(DegenerateMatrixError):
            build_frequency_severity(panel([(EXT, "Information", 1.0), (BREACH, "Information", 2.0)]))

    def test_row_order_does_not_matter(self):
        d = synth_generate(SynthConfig(n_per_year=300, year_span=(2015, 2015), seed=1))
        perm = np.random.default_rng(0).permutation(len(d))
        shuffled = Dataset(*(getattr(d, c)[perm] for c in ("ids", "loss", "year", "risk_type", "sector",
                                                           "emp_band", "rev_band", "us_flag", "contagion")))
        assert build_frequency_severity(shuffled).labels == build_frequency_severity(d).labels
        assert build_type_importance(shuffled).labels == build_type_importance(d).labels


class TestTypeImportance:
    def test_riskiest_sector_extortion(self):
        rows = [(EXT, "Information", 50.0), (BREACH, "Public Administration", 1.0),
                (DISRUPT, "Finance and Insurance", 5.0)]
        a = build_type_importance(panel(rows))
        assert a.labels["e0"] == "Exfiltration-High Importance"
        assert a.labels["e1"] == "Exfiltration-Low Importance"
        assert a.labels["e2"] == "Disruption-Medium Importance"

    def test_ties_follow_sector_labels(self):
        rows = [(EXT, s, 1.0) for s in SECTORS]
        imp = sector_importance(panel(rows))
        ordered = sorted(SECTORS)
        assert imp[ordered[0]] == IMPORTANCE_BANDS[0] and imp[ordered[-1]] == IMPORTANCE_BANDS[2]

    def test_other_is_excluded(self):
        a = build_type_importance(panel([(OTHER_TYPE, "Information", 1.0), (EXT, "Information", 2.0)]))
        assert a.excluded == ("e0",) and "e0" not in a.labels

    def test_unseen_sector_gets_medium(self):
        a = build_type_importance(panel([(EXT, "Information", 1.0), (BREACH, "Public Administration", 3.0)]))
        new = a.apply(panel([(DISRUPT, "Retail Trade", 1.0)]))
        assert new.labels["e0"] == "Disruption-Medium Importance"


class TestRandom:
    def test_single_cell_matches_none(self):
        d = synth_generate(SynthConfig(n_per_year=50, year_span=(2010, 2010), seed=0))
        r, n = random_classification(d, k=1), none_classification(d)
        assert set(r.labels) == set(n.labels) and set(r.labels.values()) == {"R1"}

    def test_uniform_frequencies(self):
        ids = [f"x{i}" for i in range(40_000)]
        d = Dataset(ids, np.ones(40_000), np.full(40_000, 2015), [EXT] * 40_000, ["Information"] * 40_000,
                    np.ones(40_000), np.ones(40_000), np.ones(40_000, bool), np.full(40_000, 2))
        a = random_classification(d, k=4, seed=3)
        np.testing.assert_allclose(a.counts() / 40_000, 0.25, atol=0.01)

    def test_deterministic(self):
        d = synth_generate(SynthConfig(n_per_year=50, year_span=(2010, 2010), seed=0))
        assert random_classification(d, seed=5).labels == random_classification(d, seed=5).labels
        assert random_classification(d, seed=5).labels != random_classification(d, seed=6).labels

    def test_rejects_zero_categories(self):
        with pytest.raises(ValueError):
            random_classification(panel([]), k=0)


class TestMerge:
    def test_same_generator_merges(self):
        merged = 0
        for seed in range(40):
            rng = np.random.default_rng(seed)
            groups, _ = merge_groups({"a": rng.normal(size=2000), "b": rng.normal(size=2000)})
            merged += len(groups) == 1
        assert merged / 40 >= 0.9

    def test_identical_multisets_always_merge(self):
        x = np.random.default_rng(1).normal(size=100)
        groups, steps = merge_groups({"a": x, "b": x[::-1]}, alpha=0.5)
        assert groups == [("a", "b")] and steps[0].distance == 0.0

    def test_separated_groups_stay_apart(self):
        rng = np.random.default_rng(2)
        groups, _ = merge_groups({"a": rng.normal(size=500), "b": rng.normal(3, size=500),
                                  "c": rng.normal(0.01, size=500)})
        assert sorted(map(sorted, groups)) == [["a", "c"], ["b"]]

    def test_group_count_monotone_in_alpha(self):
        rng = np.random.default_rng(3)
        samples = {k: rng.normal(0.08 * i, size=400) for i, k in enumerate("abcdef")}
        sizes = [len(merge_groups(samples, alpha=a)[0]) for a in (0.01, 0.05, 0.10)]
        assert sizes == sorted(sizes)

    def test_cvm_variant(self):
        rng = np.random.default_rng(4)
        groups, _ = merge_groups({"a": rng.normal(size=80), "b": rng.normal(4, size=80)}, test="CvM", n_boot=300)
        assert len(groups) == 2

    def test_tiny_groups_are_absorbed(self):
        rng = np.random.default_rng(5)
        groups, _ = merge_groups({"a": rng.normal(size=200), "b": rng.normal(5, size=200), "c": [5.1, 4.9]})
        assert sorted(map(sorted, groups)) == [["a"], ["b", "c"]]


@pytest.fixture(scope="module")
def heavy_panel():
    heavy = {t: (4.0, 0.9) for t in ("Data - Malicious Breach", "Cyber Extortion")}
    return synth_generate(SynthConfig(n_per_year=800, year_span=(2012, 2014), default_tail=(0.5, 2.5),
                                      tail_params=heavy, seed=9))


class TestResidualScheme:
    def test_tail_merges_well_specified_types(self, heavy_panel):
        # the residual model carries type dummies on both parameters, so under a correctly
        # specified generator every type's residuals are standard normal and all merge
        a = build_residual_classification(heavy_panel, "GPD", threshold=SynthConfig().threshold, seed=0)
        assert a.scheme_name == "Tail" and a.categories == ("Type 1",)
        assert a.rule.table[OTHER_TYPE] is None
        other = heavy_panel.risk_type == OTHER_TYPE
        assert set(a.excluded) == set(heavy_panel.ids[other])

    def test_body_scheme_runs(self, heavy_panel):
        a = build_residual_classification(heavy_panel, "Lognormal", seed=0)
        assert a.scheme_name == "Body" and len(a.categories) >= 1
        assert set(a.labels.values()) <= set(a.categories)


class TestAssignmentIO:
    def test_csv_round_trip(self, tmp_path):
        d = synth_generate(SynthConfig(n_per_year=40, year_span=(2010, 2011), seed=0))
        a = build_type_importance(d)
        a.to_csv(tmp_path / "a.csv")
        back = ClassificationAssignment.from_csv(tmp_path / "a.csv")
        assert back.labels == a.labels and back.categories == a.categories and back.excluded == a.excluded
        assert back.apply(d).labels == a.labels

    def test_rename_keeps_partition(self):
        d = synth_generate(SynthConfig(n_per_year=40, year_span=(2010, 2010), seed=0))
        a = random_classification(d, k=3)
        b = a.rename({"R1": "x", "R2": "y", "R3": "z"})
        assert list(b.counts()) == list(a.counts())

    def test_labels_outside_vocabulary(self):
        with pytest.raises(ValueError):
            ClassificationAssignment("X", {"e0": "nope"}, ("A",))
