"""
Convergence diagnostics over the retained draws: split-chain Gelman-Rubin statistic and
effective sample size.
"""
from typing import Dict, List

import numpy as np
import pandas as pd
from numpy.fft import irfft, rfft

from preprocess.data_types import ChainDraws, Variant


def _by_chain(values: np.ndarray, chain_index: np.ndarray) -> np.ndarray:
    """(n_chains, n_draws) matrix; chains are truncated to the shortest one."""
    chains = [values[chain_index == c] for c in np.unique(chain_index)]
    n = min(len(c) for c in chains)
    return np.vstack([c[:n] for c in chains])


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction on chains split into halves.

    Args:
        chains: (n_chains, n_draws) draws of one scalar parameter.

    Returns:
        R-hat, or NaN when fewer than two half-chains exist or the draws are constant.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    half = chains.shape[1] // 2
    if half < 2:
        return float('nan')
    split = np.vstack([chains[:, :half], chains[:, -half:]])
    n = split.shape[1]
    means = split.mean(axis=1)
    W = split.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if not W > 0:
        return float('nan')
    V = (n - 1) / n * W + B / n
    return float(np.sqrt(V / W))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    f = rfft(x - x.mean(), n=2 * n)
    return irfft(np.abs(f) ** 2)[:n] / n


def effective_sample_size(chains: np.ndarray) -> float:
    """ESS with autocorrelations averaged over chains and Geyer's initial positive sequence."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    M, n = chains.shape
    if n < 4:
        return float('nan')
    acov = np.vstack([_autocovariance(c) for c in chains])
    W = acov[:, 0].mean() * n / (n - 1)
    if not W > 0:
        return float('nan')
    var_plus = W * (n - 1) / n
    if M > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1.0 / np.log10(M * n))
    return float(M * n / tau)


def diagnostic_columns(draws: ChainDraws) -> Dict[str, np.ndarray]:
    """Parameters that enter the diagnostics; the DG pseudo-parameters eta and p_e are left out."""
    cols: Dict[str, np.ndarray] = {}
    for k in range(draws.q):
        cols[f'beta_{k}'] = draws.beta[:, k]
    for i, area in enumerate(draws.area_ids):
        cols[f'v_{area}'] = draws.v[:, i]
    cols['sigma1_sq'] = draws.sigma1_sq
    cols['sigma_v_sq'] = draws.sigma_v_sq
    if draws.variant is not Variant.DG:
        cols['eta'] = draws.eta
        cols['p_e'] = draws.p_e
    return cols


def diagnostics_table(draws: ChainDraws) -> pd.DataFrame:
    rows: List[dict] = []
    for name, values in diagnostic_columns(draws).items():
        chains = _by_chain(values, draws.chain_index)
        rows.append({'parameter': name,
                     'mean': float(np.mean(values)),
                     'sd': float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
                     'ess': effective_sample_size(chains),
                     'rhat': split_rhat(chains)})
    return pd.DataFrame(rows, columns=['parameter', 'mean', 'sd', 'ess', 'rhat'])
