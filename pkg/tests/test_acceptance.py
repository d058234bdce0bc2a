"""
Long reproductions of published figures: the corn-hectare analysis, the farm-cost analysis and
the desk-scale Monte Carlo study. Run with ``pytest --runslow``.
"""
import os

import numpy as np
import pytest
from scipy import stats

from conftest import data_path, load_corn
from preprocess.data_types import ChainConfig, ModelSpec
from preprocess.read_unit_data import read_areas_csv, read_units_csv
from preprocess.validate_dataset import log_transform_dataset, validate_dataset
from mcmc.gibbs_engine import fit
from mcmc.random_streams import PURPOSE_SAMPLE, RngStream
from postprocess.eval_model_performance import deviation_measures, read_truth_csv
from postprocess.summarize_posterior import build_report, credible_interval_ratios, \
    membership_probabilities, summarize_params
from simulation.ctrl_simulation_study import run_study
from simulation.generate_population import draw_sample, generate_population
from simulation.scenario_defs import desk_scale, named_scenario
from singlerun.run_hbsae import main

pytestmark = pytest.mark.slow

COUNTIES = ('Cerro Gordo', 'Hamilton', 'Worth', 'Humboldt', 'Franklin', 'Pocahontas',
            'Winnebago', 'Wright', 'Webster', 'Hancock', 'Kossuth', 'Hardin')
GDM_FULL = dict(zip(COUNTIES, [(123.6, 11.3), (125.8, 10.2), (107.7, 11.7), (112.0, 10.7),
                               (142.4, 8.4), (111.6, 7.3), (113.7, 7.9), (122.3, 7.7),
                               (114.3, 6.8), (123.6, 6.1), (108.1, 6.9), (136.5, 7.4)]))
DG_REDUCED = dict(zip(COUNTIES, [(122.0, 11.6), (126.4, 10.9), (107.6, 12.4), (108.9, 10.5),
                                 (143.6, 9.7), (112.3, 9.7), (113.4, 9.1), (121.9, 8.8),
                                 (115.5, 9.2), (124.8, 8.4), (107.7, 8.5), (142.6, 9.0)]))
CDM_REDUCED = dict(zip(COUNTIES, [(121.7, 9.7), (127.2, 9.7), (105.6, 10.1), (108.2, 8.7),
                                  (144.1, 7.0), (112.5, 6.5), (112.5, 6.8), (121.9, 6.6),
                                  (115.7, 5.7), (124.4, 5.4), (106.3, 5.7), (143.5, 5.9)]))
WORKERS = max(1, min(8, os.cpu_count() or 1))


def _fit_corn(variant, units='corn_units_full.csv'):
    dataset, frame = load_corn(units)
    result = fit(dataset, frame, ModelSpec(variant, chain=ChainConfig(n_workers=2)))
    return dataset, result


@pytest.fixture(scope='module')
def gdm_full():
    return _fit_corn('gdm')


def _check_table(report, table):
    areas = report.areas.set_index('area_id')
    for county, (mean, sd) in table.items():
        assert areas.loc[county, 'mean'] == pytest.approx(mean, abs=2.0), county
        assert areas.loc[county, 'sd'] == pytest.approx(sd, rel=0.2), county


def _dg_grid_posterior(dataset, frame, n_v=240, n_e=160):
    """Exact DG posterior mean and SD of every theta_i, by quadrature over (sigma_v_sq, sigma_e_sq).

    beta and v are integrated out in closed form; the prior is 1/sigma_e_sq with sigma_v_sq flat.
    """
    sv, se = np.meshgrid(np.logspace(-2.0, 5.0, n_v),
                         np.logspace(np.log10(20.0), np.log10(3000.0), n_e), indexing='ij')
    sv, se = sv.ravel(), se.ravel()
    n_i = dataset.n_i.astype(float)
    idx = dataset.area_index
    sx = np.zeros((dataset.m, dataset.q))
    np.add.at(sx, idx, dataset.X)
    sy = np.bincount(idx, weights=dataset.y, minlength=dataset.m)
    # w_i = gamma_i / n_i, so that gamma_i xbar_i = w_i sum_j x_ij
    w = sv[:, None] / (se[:, None] + n_i[None, :] * sv[:, None])
    A = (dataset.X.T @ dataset.X)[None] - np.einsum('gi,ik,il->gkl', w, sx, sx)
    A /= se[:, None, None]
    c = (dataset.X.T @ dataset.y)[None] - np.einsum('gi,ik,i->gk', w, sx, sy)
    c /= se[:, None]
    b = np.linalg.solve(A, c[..., None])[..., 0]
    quad = (dataset.y @ dataset.y - np.einsum('gi,i->g', w, sy ** 2)) / se
    log_det_v = (dataset.n - dataset.m) * np.log(se) \
        + np.log(se[:, None] + n_i[None, :] * sv[:, None]).sum(axis=1)
    log_w = -0.5 * (log_det_v + np.linalg.slogdet(A)[1] + quad - np.einsum('gk,gk->g', c, b))
    log_w += np.log(sv)
    weight = np.exp(log_w - log_w.max())
    weight /= weight.sum()

    xbar = frame.reindex(dataset.area_ids).xbar
    d = xbar[None] - w[..., None] * sx[None]
    mean = w * sy[None] + np.einsum('gik,gk->gi', d, b)
    a_inv = np.linalg.inv(A)
    var = np.einsum('gik,gkl,gil->gi', d, a_inv, d) + w * se[:, None]
    post_mean = weight @ mean
    post_var = weight @ (var + mean ** 2) - post_mean ** 2
    return dict(zip(dataset.area_ids, zip(post_mean, np.sqrt(post_var))))


def test_corn_full_gdm_county_means(gdm_full):
    dataset, result = gdm_full
    _check_table(build_report(result.draws, dataset), GDM_FULL)


@pytest.fixture(scope='module')
def dg_reduced():
    dataset, frame = load_corn('corn_units_reduced.csv')
    result = fit(dataset, frame, ModelSpec('dg', chain=ChainConfig(n_workers=2)))
    return dataset, frame, result


def test_corn_reduced_dg_matches_exact_posterior(dg_reduced):
    dataset, frame, result = dg_reduced
    exact = _dg_grid_posterior(dataset, frame)
    areas = build_report(result.draws, dataset).areas.set_index('area_id')
    for county, (mean, sd) in exact.items():
        assert areas.loc[county, 'mean'] == pytest.approx(mean, abs=0.5), county
        assert areas.loc[county, 'sd'] == pytest.approx(sd, rel=0.05), county


def test_corn_reduced_dg_county_means(dg_reduced):
    # the published DG SDs are wider than the exact posterior under the stated prior; without
    # the outlier DG agrees with the published mixture fits
    dataset, _, result = dg_reduced
    areas = build_report(result.draws, dataset).areas.set_index('area_id')
    assert areas.loc['Hardin', 'mean'] == pytest.approx(DG_REDUCED['Hardin'][0], abs=2.0)
    for county, (mean, _) in DG_REDUCED.items():
        assert areas.loc[county, 'mean'] == pytest.approx(mean, abs=3.0), county
    for county, (mean, sd) in CDM_REDUCED.items():
        assert areas.loc[county, 'mean'] == pytest.approx(mean, abs=2.0), county
        assert areas.loc[county, 'sd'] == pytest.approx(sd, rel=0.2), county


def test_corn_full_gdm_parameters(gdm_full):
    _, result = gdm_full
    params = summarize_params(result.draws).set_index('parameter')
    assert params.loc['p_e', 'mean'] == pytest.approx(0.77, abs=0.04)
    assert params.loc['sigma1_sq', 'median'] == pytest.approx(203.78, rel=0.15)
    assert params.loc['sigma2_sq', 'median'] == pytest.approx(533.24, rel=0.25)
    assert result.diagnostics['rhat'].max() < 1.05


def test_second_hardin_segment_is_flagged(gdm_full):
    dataset, result = gdm_full
    prob = membership_probabilities(result.draws, dataset)
    hardin = np.flatnonzero(np.array([dataset.area_ids[a] for a in dataset.area_index]) == 'Hardin')
    assert prob[hardin[1]] == pytest.approx(0.62, abs=0.05)
    assert np.argmax(prob) == hardin[1]


def test_reduced_corn_has_no_flagged_segment():
    dataset, result = _fit_corn('gdm', 'corn_units_reduced.csv')
    assert membership_probabilities(result.draws, dataset).max() < 0.30


def _farm_fit(variant):
    records, names = read_units_csv(data_path('aagis_units.csv'))
    frame = read_areas_csv(data_path('aagis_areas.csv'), xbar_log_scale=True)
    dataset, frame = validate_dataset(records, frame, covariate_names=names)
    dataset, frame = log_transform_dataset(dataset, frame)
    result = fit(dataset, frame, ModelSpec(variant, chain=ChainConfig(n_workers=2)))
    return build_report(result.draws, dataset)


def test_farm_costs_against_published_truth():
    truth = read_truth_csv(data_path('aagis_truth.csv'))
    gdm = _farm_fit('gdm')
    measures = deviation_measures(gdm.estimates(), truth)
    assert measures['AARD'] == pytest.approx(0.22, abs=0.03)
    assert measures['ASRD'] == pytest.approx(0.09, abs=0.03)
    dg = _farm_fit('dg')
    assert credible_interval_ratios(dg, gdm, 0.90).loc['223'] > 3.0


def test_conjugate_submodel_matches_dg():
    dataset, frame = load_corn()
    cfg = ChainConfig(n_draws=20000, burn_in=2000, thin=5, n_chains=1, seed=41)
    dg = fit(dataset, frame, ModelSpec('dg', chain=cfg), diagnostics=False).draws
    pinned = ModelSpec('gdm', chain=cfg, frozen={'z', 'eta'}, initial={'eta': 1.0})
    gdm = fit(dataset, frame, pinned, diagnostics=False).draws
    for k in range(dataset.q):
        assert stats.ks_2samp(dg.beta[:, k], gdm.beta[:, k]).statistic < 0.05


def test_chain_is_stationary_after_burn_in(small_data):
    dataset, frame = small_data
    cfg = ChainConfig(n_draws=50000, burn_in=1000, n_chains=1, seed=42)
    draws = fit(dataset, frame, ModelSpec('gdm', chain=cfg), diagnostics=False).draws
    for values in (draws.beta[:, 0], draws.beta[:, 1], np.log(draws.sigma1_sq),
                   np.log(draws.sigma_v_sq)):
        early, late = values[:10000], values[25000:]
        # batch means absorb the autocorrelation of each window
        se = np.hypot(np.std(early.reshape(50, -1).mean(axis=1), ddof=1) / np.sqrt(50),
                      np.std(late.reshape(50, -1).mean(axis=1), ddof=1) / np.sqrt(50))
        assert abs(early.mean() - late.mean()) < 4.0 * se


def test_eta_shrinks_without_contamination():
    clean = desk_scale(named_scenario('i', seed=3))
    dirty = desk_scale(named_scenario('iii', seed=3))
    medians = []
    for scenario in (clean, dirty):
        population, _ = generate_population(scenario, 0)
        dataset, frame = draw_sample(population, 10, RngStream(3, purpose=PURPOSE_SAMPLE))
        cfg = ChainConfig(n_draws=5000, burn_in=2000, n_chains=1, seed=3)
        medians.append(np.median(fit(dataset, frame, ModelSpec('gdm', chain=cfg),
                                     diagnostics=False).draws.eta))
    assert medians[0] < medians[1]


def test_desk_study_orders_methods_by_mse():
    table = run_study(desk_scale(named_scenario('iii')), ['dg', 'cdm', 'gdm'], n_workers=WORKERS)
    summary = table.summary().set_index('method')
    assert summary.loc['gdm', 'eM'] < summary.loc['cdm', 'eM'] < summary.loc['dg', 'eM']
    assert summary.loc['cdm', 'L_90'] / summary.loc['gdm', 'L_90'] > 1.15


def test_desk_study_coverage_under_normal_errors():
    table = run_study(desk_scale(named_scenario('i')), ['dg', 'gdm'], n_workers=WORKERS)
    summary = table.summary().set_index('method')
    assert 0.05 <= summary.loc['gdm', 'eC_90'] <= 0.16
    for method in table.methods:
        wide = table.wide(method)
        assert (wide['eC_95'] <= wide['eC_90']).all()


def test_corn_fit_is_byte_reproducible(tmp_path):
    outputs = []
    for run in ('a', 'b'):
        out = str(tmp_path / run)
        assert main(['fit', '--model', 'gdm', '--units', data_path('corn_units_full.csv'),
                     '--areas', data_path('corn_areas.csv'), '--out', out, '--workers', '2',
                     '--quiet']) == 0
        with open(os.path.join(out, 'areas.csv'), 'rb') as f:
            outputs.append(f.read())
    assert outputs[0] == outputs[1]
