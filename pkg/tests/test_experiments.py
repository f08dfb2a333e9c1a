import math

import numpy as np
import pytest

from slabreg import bounds, experiments as ex
from slabreg.errors import ConfigError


def small_sobolev(noise=None, size=64):
    return ex.sobolev_model(smoothness=1.0, size=size, scale=1.0, noise=noise)


def test_generate_noiseless_constant():
    model = ex.SyntheticModel(
        coefficients=np.array([2.5]), basis="Trigonometric", noise=ex.NoiseSpec("none", 0.0)
    )
    ds = ex.generate(model, 16, 0, seed=1)
    np.testing.assert_allclose(ds.y, np.full(16, 2.5), atol=1e-15)


def test_generate_deterministic_given_seed():
    model = small_sobolev()
    a = ex.generate(model, 32, 1, seed=9)
    b = ex.generate(model, 32, 1, seed=9)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.hidden_y, b.hidden_y)


def test_generate_splits_and_hides_test_labels():
    model = small_sobolev()
    ds = ex.generate(model, 16, 2, seed=3)
    assert ds.x.shape == (48, 1)
    assert ds.y.shape == (16,)
    assert ds.hidden_y.shape == (32,)


@pytest.mark.parametrize("kind,scale", [("gaussian", 0.7), ("uniform", 0.9), ("rademacher", 0.4)])
def test_noise_mean_clt_check(kind, scale):
    spec = ex.NoiseSpec(kind, scale)
    draws = spec.draw(np.random.default_rng(11), 10**6)
    tol = 5.0 * math.sqrt(spec.second_moment) / math.sqrt(10**6)
    assert abs(draws.mean()) <= tol
    assert draws.var() == pytest.approx(spec.second_moment, rel=2e-2)


def test_exact_excess_risk_trivials():
    model = ex.SyntheticModel(coefficients=np.array([2.0]), noise=ex.NoiseSpec("none", 0.0))
    assert ex.exact_excess_risk(model, np.array([2.0])) == 0.0
    assert ex.exact_excess_risk(model, np.zeros(1)) == 4.0
    longer = ex.exact_excess_risk(model, np.array([2.0, 0.5]))
    assert longer == pytest.approx(0.25)


def test_exact_excess_risk_basis_mismatch():
    model = ex.SyntheticModel(coefficients=np.array([1.0, 0.0]), basis="Trigonometric")
    with pytest.raises(ConfigError, match="basis"):
        ex.exact_excess_risk(model, np.array([1.0]), basis="Haar")


def test_exact_excess_risk_montecarlo_oracle():
    rng = np.random.default_rng(21)
    model = ex.SyntheticModel(
        coefficients=rng.normal(size=6), basis="Trigonometric", noise=ex.NoiseSpec("none", 0.0)
    )
    c = rng.normal(size=6)
    exact = ex.exact_excess_risk(model, c)
    family = model.family()
    diff_coefs = c - model.coefficients
    total = 0.0
    chunks = 20
    per = 500_000
    sq_sum = 0.0
    for i in range(chunks):
        x = np.random.default_rng(1000 + i).uniform(size=per)
        diffs = family.evaluate(x) @ diff_coefs
        total += float((diffs**2).sum())
        sq_sum += float((diffs**4).sum())
    n = chunks * per
    mc = total / n
    se = math.sqrt(max(sq_sum / n - mc**2, 0.0) / n)
    assert abs(mc - exact) <= 3.0 * se


def test_sup_bound_certificate_dominates_dense_grid():
    model = small_sobolev(size=128)
    grid = np.linspace(0, 1, 200_001)
    actual = np.abs(model.f_values(grid)).max()
    assert model.sup_bound() >= actual
    assert model.sup_bound() <= actual * 1.05 + 1e-6


def test_sup_bound_exact_for_haar():
    model = ex.besov_spike_model(smoothness=1.0, levels=4, scale=1.0, seed=2)
    grid = np.linspace(0, 1, 100_001)
    actual = np.abs(model.f_values(grid)).max()
    assert model.sup_bound() == pytest.approx(actual, rel=1e-12)


def test_label_bound_none_for_gaussian_noise():
    assert small_sobolev(noise=ex.NoiseSpec("gaussian", 0.3)).label_bound() is None
    bounded = small_sobolev(noise=ex.NoiseSpec("uniform", 0.5))
    assert bounded.label_bound() == pytest.approx(bounded.sup_bound() + 0.5)


def test_coverage_binomial_slack():
    model = small_sobolev(noise=ex.NoiseSpec("gaussian", 0.3))
    report = ex.coverage_study("IndExact", model, n_train=64, m=16, epsilon=0.25, replicates=100, seed=5)
    slack = ex.binomial_slack(0.25, 100)
    assert report.coverage >= 0.75 - slack
    assert 0.0 <= report.coverage <= 1.0


def test_coverage_two_run_concordance():
    model = small_sobolev(noise=ex.NoiseSpec("gaussian", 0.3))
    a = ex.coverage_study("IndExact", model, 64, 16, 0.25, replicates=100, seed=7)
    b = ex.coverage_study("IndExact", model, 64, 16, 0.25, replicates=500, seed=7)
    noise = ex.binomial_slack(max(a.coverage, 1 - 1e-9), 100) + ex.binomial_slack(
        max(b.coverage, 1 - 1e-9), 500
    )
    assert abs(a.coverage - b.coverage) <= max(noise, 0.06)


def test_coverage_transductive_variant():
    model = small_sobolev(noise=ex.NoiseSpec("uniform", 0.3))
    report = ex.coverage_study(
        "TrBasicBounded", model, n_train=64, m=16, epsilon=0.25, replicates=100, seed=3
    )
    assert report.coverage >= 0.75 - ex.binomial_slack(0.25, 100)


def test_coverage_rejects_unbounded_noise_for_bounded_variant():
    model = small_sobolev(noise=ex.NoiseSpec("gaussian", 0.3))
    with pytest.raises(ConfigError, match="bounded"):
        ex.coverage_study("TrBasicBounded", model, 64, 16, 0.25, replicates=100, seed=1)


def test_coverage_rejects_ind_svm():
    model = small_sobolev()
    with pytest.raises(ConfigError, match="IndSvm"):
        ex.coverage_study("IndSvm", model, 64, 16, 0.25, replicates=100, seed=1)


def test_coverage_needs_replicates():
    with pytest.raises(ConfigError, match="replicates"):
        ex.coverage_study("IndExact", small_sobolev(), 64, 16, 0.25, replicates=50, seed=1)


def test_coverage_threads_bitwise_identical():
    model = small_sobolev(noise=ex.NoiseSpec("gaussian", 0.3))
    a = ex.coverage_study("IndExact", model, 64, 8, 0.25, replicates=100, seed=2, threads=1)
    b = ex.coverage_study("IndExact", model, 64, 8, 0.25, replicates=100, seed=2, threads=4)
    assert a.rows == b.rows


def test_rate_grid_validation():
    model = small_sobolev(size=256)
    with pytest.raises(ConfigError, match="grid"):
        ex.rate_experiment(model, [64, 128, 256], replicates=2, seed=0)
    with pytest.raises(ConfigError, match="grid"):
        ex.rate_experiment(model, [16, 64, 128, 256], replicates=2, seed=0)


def test_rate_noiseless_in_span_risk_decreases():
    model = ex.SyntheticModel(
        coefficients=np.array([2.0]), basis="Trigonometric", noise=ex.NoiseSpec("none", 0.0)
    )
    report = ex.rate_experiment(model, [64, 256, 1024, 2048], replicates=6, seed=4)
    meds = [report.medians[n] for n in sorted(report.medians)]
    assert all(m >= 0 for m in meds)
    assert all(b <= a + 1e-12 for a, b in zip(meds, meds[1:]))
    assert meds[-1] <= 0.2 * meds[0]


def test_rate_report_schema_and_determinism():
    model = small_sobolev(size=256)
    a = ex.rate_experiment(model, [32, 48, 64, 96], replicates=3, seed=1)
    b = ex.rate_experiment(model, [32, 48, 64, 96], replicates=3, seed=1, threads=3)
    assert a.rows == b.rows
    assert a.slope is not None and a.slope_stderr is not None
    assert set(a.medians) == {32, 48, 64, 96}
    assert a.csv_text().splitlines()[0] == "N,replicate,mse,coverage_event,seed"


def test_rate_slope_stderr_shrinks_with_replicates():
    model = small_sobolev(size=512)
    lo = ex.rate_experiment(model, [64, 128, 256, 512], replicates=4, seed=6)
    hi = ex.rate_experiment(model, [64, 128, 256, 512], replicates=16, seed=6)
    assert hi.slope_stderr <= lo.slope_stderr * 1.25


def test_rate_sigma_scale_knob_inflates_radii():
    model = small_sobolev(size=256, noise=ex.NoiseSpec("uniform", 0.6))
    base = ex.rate_experiment(model, [32, 64, 128, 256], replicates=3, seed=2)
    inflated = ex.rate_experiment(model, [32, 64, 128, 256], replicates=3, seed=2, sigma_scale=3.0)
    # larger declared sigma -> larger thresholds -> (weakly) more shrinkage
    assert inflated.medians[256] >= base.medians[256] - 1e-12


def test_rate_budget_zero_marks_partial():
    model = small_sobolev(size=256)
    report = ex.rate_experiment(model, [32, 48, 64, 96], replicates=2, seed=0, budget_seconds=0.0)
    assert report.partial
    assert report.rows == []


def test_besov_rate_runs_and_reports():
    model = ex.besov_spike_model(smoothness=1.0, levels=8, scale=1.0, seed=1)
    report = ex.rate_experiment(model, [32, 64, 128, 256], replicates=3, seed=3)
    assert set(report.medians) == {32, 64, 128, 256}
    assert report.slope is not None


def test_transductive_zero_noise_beats_zero_predictor():
    model = ex.SyntheticModel(
        coefficients=np.array([1.0, -0.8, 0.5, 0.3]),
        basis="Trigonometric",
        noise=ex.NoiseSpec("none", 0.0),
    )
    report = ex.transductive_experiment(
        model, n_train=256, k_test=1, m=8, variant="TrBasicBounded", epsilon=0.1, replicates=30, seed=8
    )
    assert report.extras["beats_zero_fraction"] == 1.0


def test_transductive_chain_fraction_high():
    model = small_sobolev(noise=ex.NoiseSpec("uniform", 0.3))
    report = ex.transductive_experiment(
        model, n_train=64, k_test=1, m=16, variant="TrBasicBounded", epsilon=0.1, replicates=100, seed=2
    )
    assert report.extras["chain_fraction"] >= 0.9 - ex.binomial_slack(0.9, 100)
    assert report.coverage >= 0.9 - ex.binomial_slack(0.9, 100)


def test_transductive_general_k_bound_shrinks_with_more_test_points():
    model = small_sobolev(noise=ex.NoiseSpec("uniform", 0.3), size=256)
    family = model.family(8)
    spec = bounds.BoundSpec("TrGeneralK", 0.1, subexp=((2.0, 2.0),))
    medians = {}
    for k in (1, 3):
        vals = []
        for seed in range(5):
            ds = ex.generate(model, 256, k, seed=seed)
            feats = family.evaluate(ds.x)
            stats = bounds.compute_stats(feats, ds)
            from slabreg.moments import empirical_test_moments

            mom = empirical_test_moments(feats, 256, k)
            vals.append(float(np.median(bounds.tr_general_k(stats, mom, spec).beta)))
        medians[k] = vals
    assert all(b < a for a, b in zip(medians[1], medians[3]))


def test_report_json_excludes_runtime():
    model = small_sobolev(noise=ex.NoiseSpec("gaussian", 0.2), size=64)
    report = ex.coverage_study("IndExact", model, 32, 4, 0.25, replicates=100, seed=1)
    assert report.runtime_seconds is not None
    payload = report.to_json_dict()
    assert "runtime" not in str(payload)


def test_model_spec_roundtrip():
    model = ex.besov_spike_model(smoothness=1.5, levels=5, scale=0.7, seed=9)
    again = ex.SyntheticModel.from_spec(model.to_spec())
    np.testing.assert_array_equal(again.coefficients, model.coefficients)
    assert again.basis == model.basis and again.noise == model.noise


def test_inductive_per_step_risk_decrease_via_exact_oracle():
    # on replicates where the simultaneous bound event holds, each greedy
    # projection step decreases the exact excess risk by at least its delta
    model = ex.SyntheticModel(
        coefficients=np.array([1.0, -0.5, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0]),
        basis="Trigonometric",
        noise=ex.NoiseSpec("uniform", 0.2),
    )
    from slabreg import selector
    from slabreg.moments import exact_moments

    family = model.family(8)
    mom = exact_moments(family)
    checked = 0
    for seed in range(20):
        ds = ex.generate(model, 512, 0, seed=seed)
        spec = bounds.BoundSpec(
            "IndExact", 0.1, B=model.sup_bound(), sigma2=model.noise.second_moment
        )
        fit = selector.run_selection(ds, family, mom, spec)
        stats = bounds.compute_stats(family.evaluate(ds.x), ds)
        centers = bounds.slab_centers(stats, mom)
        radius = bounds.compute_radius(spec, stats, mom)
        truth = np.zeros(8)
        truth[: model.size] = model.coefficients
        event = bool(np.all((centers - truth) ** 2 <= radius.beta + 1e-15))
        if not event or fit.stopped_at == 0:
            continue
        checked += 1
        c = np.zeros(8)
        risk = ex.exact_excess_risk(model, c)
        for record in fit.trace:
            c[record.feature - 1] += record.update
            new_risk = ex.exact_excess_risk(model, c)
            assert new_risk <= risk - record.delta + 1e-9
            risk = new_risk
    assert checked >= 10


def test_transductive_coverage_500_replicates():
    model = small_sobolev(noise=ex.NoiseSpec("uniform", 0.3))
    report = ex.coverage_study(
        "TrBasicBounded", model, n_train=64, m=16, epsilon=0.25, replicates=500, seed=12
    )
    assert report.coverage >= 0.75 - ex.binomial_slack(0.25, 500)


def test_clipping_never_increases_exact_excess_risk():
    from slabreg import selector

    rng = np.random.default_rng(55)
    for _ in range(200):
        size = int(rng.integers(1, 8))
        truth = rng.uniform(-1.0, 1.0, size=size)
        model = ex.SyntheticModel(
            coefficients=truth, basis="Trigonometric", noise=ex.NoiseSpec("none", 0.0)
        )
        bound = float(np.abs(truth).max()) + float(rng.uniform(0, 0.5))
        c = rng.normal(0, 2, size=size)
        fit = selector.SelectionModel(
            coefficients=c,
            trace=(),
            bound_variant="IndExact",
            epsilon=0.1,
            kappa=0.01,
            schedule="GreedyMax",
            orthonormal_design=True,
        )
        clipped = selector.clip_coefficients(fit, bound)
        assert ex.exact_excess_risk(model, clipped.coefficients) <= ex.exact_excess_risk(model, c)
