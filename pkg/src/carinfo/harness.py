"""Seeded experiment drivers.

* :func:`run_sim_study` - gamma-generated counts fitted by the hierarchical
  Poisson-gamma and Poisson-lognormal models over a grid of region counts.
* :func:`run_quantile_comparison` - exact conjugate posterior quantiles
  against MCMC under the matched lognormal and the complete-graph BYM prior.
* :func:`run_restricted_pipeline` / :func:`run_state_batch` - BYM fits with
  and without an informativeness cap.
"""
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .approx import DEFAULT_M0, gamma_to_lognormal
from .data import CountData
from .diagnostics import ComparisonTable, PosteriorSummary, compare_models, summarize_array
from .errors import CarInfoError, ConfigError, DomainError, SamplerError
from .graph import AdjacencyGraph, complete_graph, lattice_graph
from .numerics import GammaParams, RngStream, derive_stream_id, gamma_quantile
from .samplers import (
    ChainOutput,
    McmcConfig,
    Restriction,
    effective_prior_events_draws,
    fit_bym,
    fit_poisson_gamma_hier,
    fit_poisson_lognormal,
    posterior_poisson_gamma,
)
from .samplers.bym import BymStructure

log = logging.getLogger(__name__)

__all__ = [
    "DESK_CONFIG",
    "SimStudySpec",
    "SimStudyReport",
    "simulate_counts",
    "run_sim_study",
    "QuantileRow",
    "run_quantile_comparison",
    "synthetic_bym_data",
    "oklahoma_like_fixture",
    "multi_state_fixture",
    "QUANTILE_CONFIG",
    "QUANTILE_BYM_CONFIG",
    "PairedReport",
    "run_restricted_pipeline",
    "run_state_batch",
]

# desk-scale budget; the full L = 100,000 is McmcConfig()
DESK_CONFIG = McmcConfig(iterations=20_000, thin=10)

# Quantile comparison: one-region lognormal fits are cheap, so keep 100k
# draws to pin the 2.5% tail; the BYM fit pools 50k draws over 50 regions.
QUANTILE_CONFIG = McmcConfig(iterations=202_000, burn_in=2_000, thin=2, chains=1)
QUANTILE_BYM_CONFIG = McmcConfig(iterations=102_000, burn_in=2_000, thin=2, chains=1)


def _default_replicates(n_regions: int) -> int:
    return max(1, round(200 / n_regions))


@dataclass(frozen=True)
class SimStudySpec:
    a_true: float = 5.0
    lambda0_true: float = 5e-4
    n_per_region: float = 20_000.0
    region_counts: tuple[int, ...] = (10, 25, 50, 100, 200)
    replicates: tuple[int, ...] | None = None
    root_seed: int = 0

    def __post_init__(self):
        for name in ("a_true", "lambda0_true", "n_per_region"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)!r}")
        counts = tuple(int(i) for i in self.region_counts)
        if not counts or min(counts) < 1:
            raise DomainError(f"region counts must be >= 1, got {self.region_counts!r}")
        reps = self.replicates
        reps = tuple(_default_replicates(i) for i in counts) if reps is None else tuple(int(r) for r in reps)
        if len(reps) != len(counts) or min(reps) < 1:
            raise DomainError(f"need one replicate count >= 1 per region count, got {self.replicates!r}")
        object.__setattr__(self, "region_counts", counts)
        object.__setattr__(self, "replicates", reps)

    def schedule(self) -> list[tuple[int, int]]:
        return [(i, r) for i, reps in zip(self.region_counts, self.replicates) for r in range(reps)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def simulate_counts(spec: SimStudySpec, n_regions: int, replicate: int) -> CountData:
    """lambda_i ~ Gamma(a, a/lambda0), y_i ~ Poisson(n * lambda_i); seeded by (root seed, I, replicate)."""
    rng = RngStream(spec.root_seed, derive_stream_id("data", int(n_regions), int(replicate)))
    prior = GammaParams(spec.a_true, spec.a_true / spec.lambda0_true)
    lam = rng.generator.gamma(prior.a, 1.0 / prior.b, size=int(n_regions))
    n = np.full(int(n_regions), float(spec.n_per_region))
    y = rng.generator.poisson(n * lam)
    width = max(3, len(str(n_regions)))
    return CountData(tuple(f"R{k + 1:0{width}d}" for k in range(int(n_regions))), y, n)


@dataclass
class SimStudyReport:
    spec: SimStudySpec
    config: McmcConfig
    summaries: list[dict] = field(default_factory=list)
    draws: dict[tuple[int, int, str], np.ndarray] = field(default_factory=dict)

    def summary_for(self, n_regions: int, replicate: int, model: str) -> dict:
        for row in self.summaries:
            if (row["I"], row["replicate"], row["model"]) == (n_regions, replicate, model):
                return row
        raise KeyError((n_regions, replicate, model))

    def largest_comparison(self) -> dict:
        """Gamma vs lognormal informativeness at the largest I, first replicate."""
        top = max(self.spec.region_counts)
        g = self.summary_for(top, 0, "pg")
        ln = self.summary_for(top, 0, "pln")
        return {
            "I": top,
            "a_true": self.spec.a_true,
            "gamma_median": g["median"],
            "gamma_interval95": [g["lower95"], g["upper95"]],
            "lognormal_median": ln["median"],
            "lognormal_interval95": [ln["lower95"], ln["upper95"]],
            "gamma_covers_truth": g["lower95"] <= self.spec.a_true <= g["upper95"],
            "lognormal_less_informative": ln["median"] < g["median"],
        }

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "config": self.config.to_dict(),
            "summaries": self.summaries,
            "largest_I_comparison": self.largest_comparison(),
        }


def _fit_cfg(cfg: McmcConfig, seed: int, *labels) -> McmcConfig:
    return dataclasses.replace(cfg, seed=seed, stream_base=derive_stream_id("fit", *labels))


def _sim_task(args):
    spec, cfg, n_regions, rep, model = args
    data = simulate_counts(spec, n_regions, rep)
    fitter = fit_poisson_gamma_hier if model == "pg" else fit_poisson_lognormal
    try:
        chain = fitter(data, _fit_cfg(cfg, spec.root_seed, model, n_regions, rep))
    except CarInfoError as exc:
        raise type(exc)(f"I={n_regions}, replicate={rep}, model={model}: {exc}") from exc
    info = effective_prior_events_draws(chain)
    s = summarize_array("informativeness", info)
    row = {
        "I": n_regions,
        "replicate": rep,
        "model": model,
        "median": s.median,
        "lower95": s.interval95[0],
        "upper95": s.interval95[1],
        "mean": s.mean,
        "sd": s.sd,
        "ess": s.ess,
        "mean_y": float(data.y.mean()),
    }
    return (n_regions, rep, model), row, info


def _map(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def run_sim_study(
    spec: SimStudySpec,
    cfg: McmcConfig = DESK_CONFIG,
    jobs: int = 1,
    models: Sequence[str] = ("pg", "pln"),
) -> SimStudyReport:
    """Fit both models to every (I, replicate) dataset.

    Each fit uses its own stream derived from the root seed, so the result
    is the same for any ``jobs``.
    """
    tasks = [(spec, cfg, i, r, m) for i, r in spec.schedule() for m in models]
    report = SimStudyReport(spec, cfg)
    for key, row, info in _map(_sim_task, tasks, jobs):
        log.info("sim study I=%d rep=%d %s: median informativeness %.3f", *key, row["median"])
        report.summaries.append(row)
        report.draws[key] = info
    return report


@dataclass(frozen=True)
class QuantileRow:
    y: int
    n: float
    probs: tuple[float, ...]
    exact: tuple[float, ...]
    lognormal: tuple[float, ...]
    bym: tuple[float, ...]

    def rel_error(self, which: str) -> tuple[float, ...]:
        got = getattr(self, which)
        return tuple(g / e - 1.0 for g, e in zip(got, self.exact))

    def to_dict(self) -> dict:
        d = {"y": self.y, "n": self.n}
        for name in ("exact", "lognormal", "bym"):
            for p, v in zip(self.probs, getattr(self, name)):
                d[f"{name}_q{100 * p:g}"] = v
        for name in ("lognormal", "bym"):
            for p, v in zip(self.probs, self.rel_error(name)):
                d[f"{name}_relerr_q{100 * p:g}"] = v
        return d


def run_quantile_comparison(
    a: float = 8.75,
    lambda0: float = 5e-4,
    ys: Iterable[int] = range(1, 21),
    cfg: McmcConfig = QUANTILE_CONFIG,
    bym_cfg: McmcConfig | None = QUANTILE_BYM_CONFIG,
    n_regions: int = 50,
    sigma2: float = 0.1,
    tau2: float = 0.3,
    probs: Sequence[float] = (0.025, 0.5, 0.975),
    seed: int = 0,
) -> list[QuantileRow]:
    """Posterior quantiles of a rate under three priors worth ``a`` prior events.

    For each count ``y`` with exposure ``n = y / lambda0``: the exact
    Gamma(a + y, a/lambda0 + n) posterior; MCMC under the moment-matched
    lognormal prior (one region, hyperparameters fixed); and MCMC under the
    BYM prior on a complete graph of ``n_regions`` regions all observing
    ``(y, n)`` with ``(sigma2, tau2)`` fixed, pooling draws over regions.
    """
    prior = GammaParams(a, a / lambda0)
    matched = gamma_to_lognormal(prior)
    bym_cfg = bym_cfg or cfg
    graph = complete_graph(n_regions)
    rows = []
    for y in ys:
        n = y / lambda0
        post = posterior_poisson_gamma(y, n, prior)
        exact = tuple(gamma_quantile(post, p) for p in probs)
        one = CountData(("R001",), [y], [n])
        ln = fit_poisson_lognormal(
            one,
            _fit_cfg(cfg, seed, "fig1-pln", y),
            fixed={"mu": matched.mu, "sigma2": matched.sigma2},
        )
        many = CountData(graph.region_ids, np.full(n_regions, y), np.full(n_regions, n))
        bym = fit_bym(many, graph, _fit_cfg(bym_cfg, seed, "fig1-bym", y), fixed={"sigma2": sigma2, "tau2": tau2})
        rows.append(
            QuantileRow(
                y=int(y),
                n=float(n),
                probs=tuple(probs),
                exact=exact,
                lognormal=tuple(np.quantile(ln.pooled("lambda").ravel(), probs)),
                bym=tuple(np.quantile(bym.pooled("lambda").ravel(), probs)),
            )
        )
    return rows


def synthetic_bym_data(
    graph: AdjacencyGraph,
    sigma2: float,
    tau2: float,
    rate: float = 1e-3,
    exposure: tuple[float, float] = (2_000.0, 60_000.0),
    seed: int = 0,
    label: str = "fixture",
) -> CountData:
    """Counts drawn from the BYM model itself on ``graph``.

    Exposures are log-uniform on ``exposure``; z is drawn from the
    zero-sum ICAR prior with variance ``tau2``.
    """
    rng = RngStream(seed, derive_stream_id("fixture", label)).generator
    spec = BymStructure(graph)
    z = spec.basis @ (np.sqrt(tau2 / spec.eigvals) * rng.standard_normal(spec.rank)) if spec.rank else np.zeros(graph.size)
    z = spec.center(z)
    theta = np.log(rate) + z + np.sqrt(sigma2) * rng.standard_normal(graph.size)
    n = np.exp(rng.uniform(np.log(exposure[0]), np.log(exposure[1]), graph.size))
    n = np.round(n)
    y = rng.poisson(n * np.exp(theta))
    return CountData(graph.region_ids, y, n)


def oklahoma_like_fixture(seed: int = 0) -> tuple[CountData, AdjacencyGraph]:
    """77 regions on a 7 x 11 queen lattice with mostly small counts."""
    graph = lattice_graph(7, 11, queen=True)
    return synthetic_bym_data(graph, sigma2=0.02, tau2=0.3, rate=1.06e-3, exposure=(1_500.0, 80_000.0), seed=seed, label="ok77"), graph


# (rows, cols, sigma2, tau2, rate): deliberately different variance components
_STATES = {
    "AA": (5, 6, 0.005, 0.02, 8e-4),
    "BB": (6, 6, 0.4, 1.5, 1.2e-3),
    "CC": (4, 5, 0.05, 0.4, 1e-3),
    "DD": (2, 2, 0.1, 0.3, 1e-3),  # too small for a state-level fit
}


def multi_state_fixture(seed: int = 0) -> dict[str, tuple[CountData, AdjacencyGraph]]:
    """Lattice 'states' whose true (sigma2, tau2) differ, so informativeness does too."""
    out = {}
    for name, (rows, cols, s2, t2, rate) in _STATES.items():
        g = lattice_graph(rows, cols, queen=True)
        ids = tuple(f"{name}{k:03d}" for k in range(g.size))
        g = AdjacencyGraph(ids, g.neighbors)
        out[name] = (synthetic_bym_data(g, s2, t2, rate=rate, exposure=(5_000.0, 200_000.0), seed=seed, label=name), g)
    return out


@dataclass
class PairedReport:
    unrestricted: ChainOutput
    restricted: ChainOutput
    comparison: ComparisonTable
    a_floor: float
    m0: int

    def to_dict(self) -> dict:
        return {
            "a_floor": self.a_floor,
            "m0": self.m0,
            "config": self.unrestricted.config.to_dict(),
            "seeds": {"unrestricted": self.unrestricted.config.stream_base, "restricted": self.restricted.config.stream_base},
            "informativeness": self.comparison.informativeness_rows(),
            "restricted_max_informativeness": float(effective_prior_events_draws(self.restricted, self.m0).max()),
            "unrestricted_max_informativeness": float(effective_prior_events_draws(self.unrestricted, self.m0).max()),
            "regions": self.comparison.region_rows(),
        }


def run_restricted_pipeline(
    data: CountData,
    graph: AdjacencyGraph,
    cfg: McmcConfig = DESK_CONFIG,
    a_floor: float = 6.0,
    m0: int = DEFAULT_M0,
) -> PairedReport:
    """Fit the BYM model twice, without and with ``a_hat < a_floor`` at ``m0``.

    Both fits share the same seed and streams; percent changes are
    unrestricted relative to restricted.
    """
    restriction = Restriction(a_floor, m0)
    free = fit_bym(data, graph, cfg, m0=m0)
    capped = fit_bym(data, graph, cfg, restriction=restriction)
    info = effective_prior_events_draws(capped, m0)
    if not np.all(info < a_floor):
        raise SamplerError(f"restricted fit emitted informativeness {info.max():.6g} >= cap {a_floor}")
    table = compare_models([free, capped], m0=m0, labels=("unrestricted", "restricted"))
    return PairedReport(free, capped, table, float(a_floor), int(m0))


def _state_task(args):
    name, data, graph, cfg, m0, a_floor = args
    try:
        if a_floor is None:
            chain = fit_bym(data, graph, cfg, m0=m0)
        else:
            chain = fit_bym(data, graph, cfg, restriction=Restriction(a_floor, m0))
    except CarInfoError as exc:
        raise type(exc)(f"state {name}: {exc}") from exc
    return name, summarize_array("informativeness", effective_prior_events_draws(chain, m0))


def run_state_batch(
    states: Mapping[str, tuple[CountData, AdjacencyGraph]],
    cfg: McmcConfig = DESK_CONFIG,
    m0: int = DEFAULT_M0,
    a_floor: float | None = None,
    min_regions: int = 5,
    jobs: int = 1,
) -> dict[str, PosteriorSummary]:
    """One BYM fit per state; states with fewer than ``min_regions`` regions are skipped."""
    if min_regions < 1:
        raise ConfigError("min_regions must be >= 1")
    tasks = [
        (name, data, graph, _fit_cfg(cfg, cfg.seed, "state", name), m0, a_floor)
        for name, (data, graph) in sorted(states.items())
        if data.size >= min_regions
    ]
    return dict(_map(_state_task, tasks, jobs))
