"""Posterior summaries, Monte Carlo effective sample size and model comparison."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .samplers import ChainOutput, effective_prior_events_draws

__all__ = [
    "QUANTILE_PROBS",
    "PosteriorSummary",
    "autocorrelation",
    "effective_sample_size",
    "summarize",
    "summarize_array",
    "summarize_all",
    "percent_change",
    "ComparisonTable",
    "compare_models",
]

QUANTILE_PROBS = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass(frozen=True)
class PosteriorSummary:
    name: str
    mean: float
    sd: float
    quantiles: tuple[float, ...]
    ess: float
    chains: int
    draws: int

    @property
    def median(self) -> float:
        return self.quantiles[QUANTILE_PROBS.index(0.5)]

    @property
    def interval95(self) -> tuple[float, float]:
        return self.quantiles[0], self.quantiles[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quantiles"] = dict(zip((f"q{100 * p:g}" for p in QUANTILE_PROBS), self.quantiles))
        return d


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation at every lag (biased estimator, FFT based)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0.0:
        return np.concatenate([[1.0], np.zeros(n - 1)])
    return acov / acov[0]


def _ess_single(x) -> float:
    # Geyer's initial positive sequence: sum lag pairs until one goes negative
    n = len(x)
    if n < 4:
        return float(n)
    rho = autocorrelation(x)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair < 0.0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0 / n))


def effective_sample_size(draws) -> float:
    """ESS of ``(chains, draws)`` (or a 1-D chain), summed over chains and capped at the total."""
    arr = np.asarray(draws, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    total = arr.size
    ess = sum(_ess_single(c) for c in arr)
    return float(min(max(ess, np.finfo(float).tiny), total))


def summarize_array(name: str, draws) -> PosteriorSummary:
    """Summary of a ``(chains, draws)`` array; quantiles use linear (type-7) interpolation."""
    arr = np.asarray(draws, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size == 0:
        raise ContractError(f"no draws to summarize for {name!r}")
    flat = arr.ravel()
    q = np.quantile(flat, QUANTILE_PROBS, method="linear")
    dev = flat - flat[0]  # shifted moments: exact for constant draws
    return PosteriorSummary(
        name=name,
        mean=float(flat[0] + dev.mean()),
        sd=float(dev.std(ddof=1)) if flat.size > 1 else 0.0,
        quantiles=tuple(float(v) for v in np.maximum.accumulate(q)),
        ess=effective_sample_size(arr),
        chains=arr.shape[0],
        draws=arr.shape[1],
    )


def summarize(chain: ChainOutput, parameter: str, region: str | int | None = None) -> PosteriorSummary:
    """Summarize a scalar parameter, or one region of a per-region parameter.

    ``parameter`` may also be ``"informativeness"``, which routes through
    :func:`effective_prior_events_draws`.
    """
    if parameter == "informativeness":
        return summarize_array(parameter, effective_prior_events_draws(chain))
    arr = chain[parameter]
    if arr.ndim == 3:
        if region is None:
            if arr.shape[2] != 1:
                raise ContractError(f"{parameter!r} is per-region; choose a region")
            region = 0
        idx = chain.region_index(region) if isinstance(region, str) else int(region)
        label = chain.region_ids[idx] if arr.shape[2] == len(chain.region_ids) else str(idx)
        return summarize_array(f"{parameter}[{label}]", arr[:, :, idx])
    if region is not None:
        raise ContractError(f"{parameter!r} is not per-region")
    return summarize_array(parameter, arr)


def summarize_all(chain: ChainOutput) -> list[PosteriorSummary]:
    """Every scalar parameter, every coefficient, and every region of per-region parameters."""
    out = []
    for name in sorted(chain.draws):
        arr = chain.draws[name]
        if arr.ndim == 2:
            out.append(summarize_array(name, arr))
        elif name == "beta":
            out.extend(summarize_array(f"beta[{j}]", arr[:, :, j]) for j in range(arr.shape[2]))
        else:
            out.extend(summarize_array(f"{name}[{rid}]", arr[:, :, i]) for i, rid in enumerate(chain.region_ids))
    return out


def percent_change(a, b):
    """100 * log(a / b): positive when ``a`` exceeds ``b``, antisymmetric in (a, b)."""
    return 100.0 * np.log(np.asarray(a, dtype=float) / np.asarray(b, dtype=float))


@dataclass(frozen=True)
class ComparisonTable:
    labels: tuple[str, ...]
    m0: int
    informativeness: tuple[PosteriorSummary, ...]
    region_ids: tuple[str, ...]
    rate_medians: np.ndarray  # (models, regions)
    percent_change: np.ndarray  # (models - 1, regions), each model vs the reference
    reference: str

    def informativeness_rows(self) -> list[dict]:
        return [
            {
                "model": lab,
                "m0": self.m0,
                "median": s.median,
                "lower95": s.interval95[0],
                "upper95": s.interval95[1],
                "mean": s.mean,
                "ess": s.ess,
            }
            for lab, s in zip(self.labels, self.informativeness)
        ]

    def region_rows(self) -> list[dict]:
        others = [lab for lab in self.labels if lab != self.reference]
        rows = []
        for i, rid in enumerate(self.region_ids):
            row = {"region_id": rid}
            for lab, med in zip(self.labels, self.rate_medians[:, i]):
                row[f"median_{lab}"] = float(med)
            for lab, pc in zip(others, self.percent_change[:, i]):
                row[f"pct_change_{lab}_vs_{self.reference}"] = float(pc)
            rows.append(row)
        return rows


def compare_models(
    chains: Sequence[ChainOutput],
    m0: int = 3,
    labels: Sequence[str] | None = None,
    reference: int = -1,
) -> ComparisonTable:
    """Informativeness summaries and per-region rate medians across fits.

    Percent changes compare each model against ``chains[reference]`` (by
    default the last one), so for ``[unrestricted, restricted]`` a positive
    value means the unrestricted fit gives the higher rate.
    """
    chains = list(chains)
    if len(chains) < 1:
        raise ContractError("need at least one chain to compare")
    labels = tuple(labels) if labels is not None else tuple(
        f"{c.model}{'_restricted' if c.restriction is not None else ''}" for c in chains
    )
    if len(set(labels)) != len(labels) or len(labels) != len(chains):
        raise ContractError(f"labels must be unique, one per chain: {labels!r}")
    ids = chains[0].region_ids
    for c in chains[1:]:
        if set(c.region_ids) != set(ids):
            raise ContractError("chains cover different region sets")
    infos = tuple(
        summarize_array("informativeness", effective_prior_events_draws(c, m0 if c.model == "bym" else None))
        for c in chains
    )
    meds = np.array(
        [np.median(c.pooled("lambda")[:, [c.region_index(r) for r in ids]], axis=0) for c in chains]
    )
    ref = reference % len(chains)
    others = [k for k in range(len(chains)) if k != ref]
    pct = np.array([percent_change(meds[k], meds[ref]) for k in others]).reshape(len(others), len(ids))
    return ComparisonTable(labels, int(m0), infos, tuple(ids), meds, pct, labels[ref])
