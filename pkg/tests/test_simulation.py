import os
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from preprocess.data_types import ChainConfig
from preprocess.errors import ConfigurationError, SampleTooLarge
from mcmc.random_streams import PURPOSE_SAMPLE, RngStream
from simulation.ctrl_simulation_study import aggregate_metrics, metric_names, run_study, \
    write_study
from simulation.generate_population import area_labels, draw_sample, generate_population
from simulation.scenario_defs import ErrorGenerator, ScenarioSpec, desk_scale, named_scenario
from simulation.worker_fit_replicate import ReplicateRecord, run_job

TINY_CHAIN = ChainConfig(n_draws=60, burn_in=20, n_chains=1)


def _tiny(**kw):
    spec = ScenarioSpec(name='tiny', error=ErrorGenerator('normal'), m=5, N_i=20, n_i=3, S=2, seed=3)
    return replace(spec, **kw)


def test_named_scenarios():
    assert named_scenario('ii').error.p_e == 0.90
    assert named_scenario('v').error.label() == '3% N(5,5^2)'
    assert named_scenario('iv').error.label() == 't_4'
    full = named_scenario('i')
    assert (full.m, full.N_i, full.n_i, full.S) == (40, 200, 4, 100)
    desk = desk_scale(full)
    assert (desk.m, desk.N_i, desk.n_i, desk.S) == (20, 100, 4, 50)
    with pytest.raises(ConfigurationError):
        named_scenario('vi')


def test_mixture_fractions():
    e, component = named_scenario('ii').error.draw(np.random.default_rng(1), 200000)
    assert np.mean(component == 0) == pytest.approx(0.10, abs=0.005)
    assert np.var(e) == pytest.approx(0.9 + 0.1 * 25.0, rel=0.03)
    e, component = named_scenario('v').error.draw(np.random.default_rng(2), 200000)
    assert np.mean(component == 0) == pytest.approx(0.03, abs=0.002)
    assert np.mean(e) == pytest.approx(0.15, abs=0.02)


def test_t_errors_match_student_quartiles():
    e, _ = named_scenario('iv').error.draw(np.random.default_rng(3), 200000)
    q25, q75 = np.quantile(e, [0.25, 0.75])
    assert q75 == pytest.approx(stats.t.ppf(0.75, 4), abs=0.02)
    assert q25 == pytest.approx(stats.t.ppf(0.25, 4), abs=0.02)


def test_bad_generator_settings():
    with pytest.raises(ConfigurationError):
        ErrorGenerator('mixture', p_e=1.5).validate()
    with pytest.raises(ConfigurationError):
        ErrorGenerator('laplace').validate()
    with pytest.raises(ConfigurationError):
        _tiny(m=2).validate()


def test_population_is_reproducible_and_covariates_fixed():
    scenario = _tiny()
    a, theta_a = generate_population(scenario, 1)
    b, theta_b = generate_population(scenario, 1)
    c, theta_c = generate_population(scenario, 2)
    assert a.frame.equals(b.frame)
    assert np.array_equal(theta_a, theta_b)
    assert np.array_equal(a.frame['x'], c.frame['x'])
    assert not np.array_equal(a.frame['y'], c.frame['y'])
    assert not np.array_equal(theta_a, theta_c)


def test_noiseless_population_means_are_theta():
    scenario = _tiny(error=ErrorGenerator('zero'))
    population, theta = generate_population(scenario, 0)
    means = population.frame.groupby('area_id', sort=False)['y'].mean().to_numpy()
    assert np.allclose(means, theta)
    assert population.area_ids == area_labels(5) == ('1', '2', '3', '4', '5')


def test_simple_random_sample():
    scenario = _tiny()
    population, _ = generate_population(scenario, 0)
    dataset, frame = draw_sample(population, 3, RngStream(3, replicate=0, purpose=PURPOSE_SAMPLE))
    assert dataset.n_i.tolist() == [3] * 5
    assert frame.N.tolist() == [20] * 5
    assert np.allclose(frame.xbar[:, 1], population.xbar)
    pairs = set(zip(population.frame['area_id'], population.frame['y']))
    assert all((dataset.area_ids[a], y) in pairs for a, y in zip(dataset.area_index, dataset.y))


def test_sample_larger_than_area():
    population, _ = generate_population(_tiny(), 0)
    with pytest.raises(SampleTooLarge):
        draw_sample(population, 21, RngStream(0))


def test_replicate_fit_does_not_depend_on_the_batch():
    scenario = _tiny()
    job = (scenario, 1, 'gdm', TINY_CHAIN, (0.9, 0.95))
    key, first = run_job(job)
    _, again = run_job(job)
    assert key == (1, 'gdm')
    assert np.array_equal(first.theta_hat, again.theta_hat)
    assert np.array_equal(first.lower[0.9], again.lower[0.9])


def _perfect_records(theta, method='gdm'):
    return [ReplicateRecord(replicate=s, method=method, theta_true=t, theta_hat=t.copy(),
                            post_var=np.zeros_like(t), lower={0.9: t, 0.95: t},
                            upper={0.9: t, 0.95: t}) for s, t in enumerate(theta)]


def test_perfect_estimates_give_zero_metrics():
    theta = np.random.default_rng(4).normal(size=(3, 4))
    table = aggregate_metrics(_perfect_records(theta), 'zero', area_labels(4))
    wide = table.wide('gdm')
    for name in ('eB', 'eM', 'V', 'eC_90', 'eC_95', 'L_90', 'L_95'):
        assert np.all(wide[name] == 0.0), name
    assert wide['RE_V'].isna().all()


def test_metric_arithmetic():
    truth = np.zeros(2)
    records = [ReplicateRecord(0, 'dg', truth, np.array([1.0, 2.0]), np.array([1.0, 2.0]),
                               {0.9: np.array([0.5, -1.0])}, {0.9: np.array([1.5, 1.0])}),
               ReplicateRecord(1, 'dg', truth, np.array([-1.0, 2.0]), np.array([1.0, 6.0]),
                               {0.9: np.array([-2.0, 1.0])}, {0.9: np.array([0.0, 3.0])})]
    wide = aggregate_metrics(records, 'x', ('p', 'q'), levels=(0.9,)).wide('dg').set_index('area')
    assert wide.loc['p', 'eB'] == 0.0
    assert wide.loc['p', 'eM'] == 1.0
    assert wide.loc['p', 'RE_V'] == 0.0
    assert wide.loc['q', 'eB'] == 2.0
    assert wide.loc['q', 'RE_V'] == pytest.approx((4.0 - 4.0) / 4.0)
    assert wide.loc['p', 'eC_90'] == 0.5
    assert wide.loc['q', 'eC_90'] == 0.5
    assert wide.loc['p', 'L_90'] == 1.5
    assert list(wide.columns) == metric_names((0.9,))


def test_study_does_not_depend_on_worker_count(tmp_path):
    scenario = _tiny()
    serial = run_study(scenario, ['dg', 'gdm'], chain=TINY_CHAIN, n_workers=1)
    parallel = run_study(scenario, ['dg', 'gdm'], chain=TINY_CHAIN, n_workers=2)
    assert serial.long.equals(parallel.long)
    assert serial.methods == ['dg', 'gdm']
    assert len(serial.long) == 2 * 5 * len(metric_names((0.9, 0.95)))
    ratios = serial.length_ratios()
    assert list(ratios['ratio']) == ['dg/gdm', 'dg/gdm']

    write_study(serial, str(tmp_path))
    for name in ('metrics.csv', 'summary.csv', 'metrics.json'):
        assert (tmp_path / name).exists()
    assert os.path.exists(tmp_path / 'panels' / 'bias_gdm.csv')
    assert os.path.exists(tmp_path / 'panels' / 'length_ratios.csv')


def test_study_rejects_unknown_method():
    with pytest.raises(ConfigurationError):
        run_study(_tiny(), ['ols'], chain=TINY_CHAIN)
