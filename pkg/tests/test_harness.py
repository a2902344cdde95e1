import json

import numpy as np
import pytest

from taxoscore.classifications import advisen_classification
from taxoscore.data_model import ADVISEN_TYPES, Dataset, SynthConfig, synth_generate
from taxoscore.evt_gpd import ThresholdResult
from taxoscore.gamlss import CovariateSpec, build_design, fit
from taxoscore.harness import (POWER_SIZES, PipelineConfig, PlanError, compare_schemes, fit_window,
                               make_window_plan, power_from_scores, power_study, run_pipeline, score_window,
                               trimmed_paths, window_thresholds)
from taxoscore.inference import AlignmentError, forecast_comparison_test
from taxoscore.scoring import ScoreKind, WeightKind, r_crps

COLS = ("ids", "loss", "year", "risk_type", "sector", "emp_band", "rev_band", "us_flag", "contagion")
FAST = PipelineConfig(knot_grid=(0,), terms=("scheme", "us_flag"), score_kinds=("rCRPS", "twCRPS"), n_boot=200)
RCRPS_ONLY = PipelineConfig(knot_grid=(0,), terms=("scheme",), score_kinds=("rCRPS",))


def concat(a, b):
    return Dataset(*(np.concatenate([getattr(a, c), getattr(b, c)]) for c in COLS))


def fixed_threshold(d, cfg=FAST):
    u = SynthConfig().threshold
    return {w: ThresholdResult(u, 0.5, []) for w in make_window_plan(d.span, cfg.window_length)}


def shifted_mix(seed, n_per_year=1000):
    """Two heavy risk types are rare in training years and common in the test year."""
    heavy = {t: (4.0, 0.8) for t in ADVISEN_TYPES[:2]}
    old, new = np.ones(14), np.ones(14)
    old[:2], new[:2] = 0.1, 4.0
    base = dict(n_per_year=n_per_year, default_tail=(0.5, 2.0), tail_params=heavy)
    a = synth_generate(SynthConfig(year_span=(2010, 2014), risk_type_weights=tuple(old), seed=seed, **base))
    b = synth_generate(SynthConfig(year_span=(2015, 2015), risk_type_weights=tuple(new), seed=seed + 1000, **base))
    return concat(a, b)


@pytest.fixture(scope="module")
def small():
    return synth_generate(SynthConfig(n_per_year=200, year_span=(2010, 2016), seed=21))


class TestPlan:
    def test_first_window(self):
        plan = make_window_plan((2008, 2021))
        assert plan.windows[0].train == (2008, 2012) and plan.windows[0].test == 2013
        assert len(plan) == 9 and plan.test_years[-1] == 2021

    def test_minimal_span(self):
        assert len(make_window_plan((2008, 2013))) == 1

    def test_too_short(self):
        with pytest.raises(PlanError):
            make_window_plan((2008, 2012))

    @pytest.mark.parametrize("span", [(2008, 2021), (2000, 2030)])
    def test_structure(self, span):
        plan = make_window_plan(span)
        for a, b in zip(plan.windows, plan.windows[1:]):
            assert b.train[0] - a.train[0] == 1
        assert all(w.train[1] - w.train[0] == 4 and w.test == w.train[1] + 1 for w in plan)


class TestPipeline:
    def test_none_and_single_random_cell_agree(self, small):
        th = window_thresholds(small, make_window_plan(small.span), FAST)
        cfg = PipelineConfig(**{**FAST.to_dict(), "random_k": 1})
        none = run_pipeline(small, "None", cfg, th)
        rand = run_pipeline(small, "Random", cfg, th)
        for key in none.windows[0].scores:
            a, b = none.pooled(*key), rand.pooled(*key)
            assert a.event_ids == b.event_ids
            np.testing.assert_array_equal(a.values, b.values)

    def test_test_year_data_cannot_leak(self, small):
        plan = make_window_plan(small.span)
        w = plan.windows[0]
        perturbed_loss = np.where(small.year == w.test, small.loss * 7.0 + 1.0, small.loss)
        other = Dataset(*(perturbed_loss if c == "loss" else getattr(small, c) for c in COLS))
        th_a = window_thresholds(small, plan, FAST)[w]
        th_b = window_thresholds(other, plan, FAST)[w]
        assert th_a == th_b
        for scheme in ("Advisen", "TypeImportance", "Random"):
            a = fit_window(small, scheme, w, FAST, th_a).model
            b = fit_window(other, scheme, w, FAST, th_b).model
            assert a.to_json() == b.to_json()

    def test_renaming_labels_changes_nothing(self, small):
        th = fixed_threshold(small)
        a = advisen_classification(small)
        renamed = a.rename({c: f"cat{i}" for i, c in enumerate(a.categories)})
        r1 = run_pipeline(small, "Advisen", FAST, th, assignment=a)
        r2 = run_pipeline(small, "Advisen", FAST, th, assignment=renamed)
        for key in r1.windows[0].scores:
            np.testing.assert_allclose(r1.pooled(*key).values, r2.pooled(*key).values, rtol=1e-10)

    def test_deterministic(self, small):
        th = window_thresholds(small, make_window_plan(small.span), FAST)
        a = run_pipeline(small, "Random", FAST, th).summary()
        b = run_pipeline(small, "Random", FAST, th).summary()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_errors_stay_on_their_window(self, small):
        th = fixed_threshold(small)
        first = make_window_plan(small.span).windows[0]
        th[first] = ValueError("no valid threshold")
        res = run_pipeline(small, "None", FAST, th)
        assert res.windows[0].error and res.windows[0].scores == {}
        assert res.windows[1].error is None and res.windows[1].scores

    def test_every_test_event_scored_once(self, small):
        res = run_pipeline(small, "None", FAST, fixed_threshold(small))
        ids = res.pooled("rCRPS", "Equal").event_ids
        assert len(ids) == len(set(ids))
        for w in res.windows:
            assert w.n_test + w.n_below_threshold + w.n_excluded == int(np.sum(small.year == w.window.test))

    def test_planted_scheme_wins_on_mean_score(self):
        # risk types differ in scale; the matching scheme should forecast better
        heavy = {t: (3.0, 1.2) for t in ADVISEN_TYPES[:4]}
        wins = 0
        for seed in range(10):
            cfg = SynthConfig(n_per_year=2000, year_span=(2010, 2015), default_tail=(0.5, 1.2), tail_params=heavy,
                              seed=seed)
            d = synth_generate(cfg)
            w = make_window_plan(d.span).windows[0]
            th = ThresholdResult(cfg.threshold, 0.5, [])
            means = [score_window(d, fit_window(d, s, w, RCRPS_ONLY, th), RCRPS_ONLY)
                     .scores[(ScoreKind.RCRPS, WeightKind.EQUAL)].mean() for s in ("Advisen", "None")]
            wins += means[0] < means[1]
        assert wins / 10 >= 0.8


class TestCompare:
    def test_self_comparison_is_zero(self, small):
        th = fixed_threshold(small)
        r = run_pipeline(small, "None", FAST, th)
        tables = compare_schemes({"None": r, "Again": r})
        assert all(t.statistic == 0.0 for t in tables.overall.values())

    def test_different_plans(self, small):
        th = fixed_threshold(small)
        a = run_pipeline(small, "None", FAST, th)
        short = small.years(2010, 2015)
        b = run_pipeline(short, "Advisen", FAST, fixed_threshold(short))
        with pytest.raises(AlignmentError):
            compare_schemes({"None": a, "Advisen": b})

    def test_missing_baseline(self, small):
        r = run_pipeline(small, "None", FAST, fixed_threshold(small))
        with pytest.raises(KeyError):
            compare_schemes({"Advisen": r}, baseline="None")

    def test_planted_signal_rejects_in_right_tail(self):
        d = shifted_mix(0)
        th = fixed_threshold(d, RCRPS_ONLY)
        results = {s: run_pipeline(d, s, RCRPS_ONLY, th) for s in ("Advisen", "None")}
        tables = compare_schemes(results)
        assert tables.overall[("Advisen", ScoreKind.RCRPS, WeightKind.RIGHT)].reject_05

    def test_tables_write_csv(self, small, tmp_path):
        th = fixed_threshold(small)
        res = {s: run_pipeline(small, s, FAST, th) for s in ("None", "Advisen")}
        paths = compare_schemes(res).to_csv(tmp_path)
        header = open(paths[0]).readline().strip()
        assert header == "scheme,Equal,Center,Left,Right"

    def test_trimmed_full_quantile_matches_overall(self, small):
        th = fixed_threshold(small)
        a, b = (run_pipeline(small, s, FAST, th) for s in ("Advisen", "None"))
        paths = trimmed_paths(a, b, small, "rCRPS", "Right")
        overall = forecast_comparison_test(a.pooled("rCRPS", "Right"), b.pooled("rCRPS", "Right"))
        assert paths[1.0].statistic == pytest.approx(overall.statistic)

    def test_random_vs_none_size_on_null_data(self):
        # null panels carry no risk-type signal; 10,000 replications
        from taxoscore.evt_gpd import ThresholdResult as TR

        rej = np.zeros(4)
        n_rep = 10_000
        for rep in range(n_rep):
            cfg = SynthConfig(n_per_year=100, year_span=(2010, 2015), seed=50_000 + rep)
            d = synth_generate(cfg)
            w = make_window_plan(d.span).windows[0]
            th = TR(cfg.threshold, 0.5, [])
            res = {s: score_window(d, fit_window(d, s, w, RCRPS_ONLY, th), RCRPS_ONLY) for s in ("Random", "None")}
            for j, wt in enumerate(WeightKind):
                key = (ScoreKind.RCRPS, wt)
                rej[j] += forecast_comparison_test(res["Random"].scores[key], _rebrand(res["None"].scores[key],
                                                                                       "Random")).reject_05
        rates = rej / n_rep
        print("Random vs None rejection rates:", dict(zip([w.value for w in WeightKind], rates.round(4))))
        assert np.all(np.abs(rates - 0.05) <= 0.01)


def _rebrand(s, name):
    from taxoscore.scoring import ScoreSeries

    return ScoreSeries(name, s.kind, s.weight, s.event_ids, s.values, s.beta, s.ref)


class TestPower:
    @pytest.fixture(scope="class")
    @staticmethod
    def models():
        cfg = SynthConfig(n_per_year=2000, year_span=(2010, 2017), year_effects={y: -0.3 for y in range(2010, 2014)},
                          seed=4)
        d = synth_generate(cfg)
        u = cfg.threshold
        spec = CovariateSpec(terms=())
        out = []
        for span in ((2014, 2016), (2010, 2013)):
            ex = d.years(*span).subset(d.years(*span).loss > u)
            out.append(fit(ex.loss - u, build_design(ex, spec), spec, threshold=u))
        ev = d.years(2017, 2017)
        return out[0], out[1], ev.subset(ev.loss > u)

    def test_coinciding_models_never_reject(self, models):
        m, _, ev = models
        table = power_study(m, m, ev, sizes=(20, 100), n_rep=1000, n_draws_per_event=20)
        assert np.all(table.cells == 0)

    def test_null_calibration(self):
        # exchangeable score pairs with an exactly centered universe hold the nominal size
        rng = np.random.default_rng(0)
        s1 = r_crps(rng.random(200_000))
        s2 = s1[rng.permutation(s1.size)]
        rates = power_from_scores(s1, s2, sizes=(100, 500, 1000), n_rep=10_000, seed=1)
        assert np.all(np.abs(rates - 0.05) <= 0.01)

    def test_power_grows_with_size(self, models):
        m, b, ev = models
        table = power_study(m, b, ev, n_rep=2000, n_draws_per_event=100, seed=2)
        assert table.sizes == POWER_SIZES
        assert np.all(np.diff(table.cells, axis=0) >= -0.02)
        assert np.all((table.cells >= 0) & (table.cells <= 1))

    def test_rejects_unsupported_kind(self, models):
        m, b, ev = models
        with pytest.raises(ValueError):
            power_study(m, b, ev, kind="CRPS")

    def test_table_round_trip(self, models, tmp_path):
        m, b, ev = models
        table = power_study(m, b, ev, sizes=(20, 50), n_rep=1000, n_draws_per_event=20)
        table.to_csv(tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().splitlines()[0] == "sample_size,Equal,Center,Left,Right"
        assert json.loads(json.dumps(table.to_dict()))["n_rep"] == 1000
