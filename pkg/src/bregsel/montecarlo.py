"""Monte Carlo campaigns over mixture data-generating processes.

Samples come from ``pi * Gamma + (1 - pi) * LogNormal``; in every
replication both families are fitted, the two divergences and ``U`` are
computed and the selection decision is recorded. Gamma is always candidate A
and the log-normal candidate B.

Every replication draws from its own generator seeded by
``(master_seed, round(pi * 1e6), n, rep_index)``, so results do not depend
on the order in which replications run or on how they are spread over
worker processes.
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .density import Sample
from .divergence import BregmanGenerator, TruncationPolicy
from .errors import BregselError, DomainError
from .parametric import (BALL_BEARING_GAMMA, BALL_BEARING_LOGNORMAL, GammaParams,
                         LogNormalParams, MixtureDGP)
from .selection import Decision, SelectionSettings, fit_pair, u_statistic

STATISTICS = ("alpha", "eta", "mu", "sigma", "d1", "d2", "u")
SKIP_WARNING_FRACTION = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    pi: float
    gamma_truth: GammaParams = BALL_BEARING_GAMMA
    lognormal_truth: LogNormalParams = BALL_BEARING_LOGNORMAL
    sample_sizes: tuple = (20, 40, 60, 80, 90)
    replications: int = 1000
    master_seed: int = 20240101
    level: float = 0.05
    bootstrap_B: int = 100
    beta: float = 3.0
    c1: float = 1.0
    c_gamma: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise DomainError(f"pi must lie in [0, 1], got {self.pi}")
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        if not self.sample_sizes:
            raise DomainError("sample_sizes must be nonempty")
        if any(n < 10 for n in self.sample_sizes):
            raise DomainError("every sample size must be at least 10")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise DomainError("master_seed must be an unsigned 64-bit integer")
        if not 0 < self.level < 1:
            raise DomainError("level must lie in (0, 1)")
        if self.bootstrap_B < 50:
            raise DomainError("bootstrap_B must be at least 50")

    @property
    def dgp(self):
        return MixtureDGP(self.pi, self.gamma_truth, self.lognormal_truth)

    @property
    def generator(self):
        return BregmanGenerator(self.beta, self.c1)

    @property
    def settings(self):
        return SelectionSettings(truncation=TruncationPolicy(self.c_gamma))


# the five standard campaigns; table 5 ends at n = 200 instead of 90
TABLES = {
    1: dict(pi=0.0),
    2: dict(pi=1.0),
    3: dict(pi=0.25),
    4: dict(pi=0.5),
    5: dict(pi=0.75, sample_sizes=(20, 40, 60, 80, 200)),
}


def table_config(table, **overrides):
    if table not in TABLES:
        raise DomainError(f"unknown table {table!r}; choose from {sorted(TABLES)}")
    return ExperimentConfig(**{**TABLES[table], **overrides})


@dataclass(frozen=True)
class ReplicationRecord:
    n: int
    rep_index: int
    alpha: float = math.nan
    eta: float = math.nan
    mu: float = math.nan
    sigma: float = math.nan
    d1: float = math.nan
    d2: float = math.nan
    u: float = math.nan
    decision: Decision = None
    skipped: str = None


@dataclass(frozen=True)
class TableRow:
    n: int
    means: dict
    sds: dict
    pcs: tuple
    skipped: int
    replications: int
    warning: str = None

    def as_dict(self):
        out = {"n": self.n}
        for s in STATISTICS:
            out[f"{s}_mean"] = self.means[s]
            out[f"{s}_sd"] = self.sds[s]
        out["pcs_a"], out["pcs_ind"], out["pcs_b"] = self.pcs
        out["skipped"] = self.skipped
        return out


def replication_rng(config, n, rep_index):
    key = (int(round(config.pi * 1e6)), int(n), int(rep_index))
    return np.random.default_rng(np.random.SeedSequence(config.master_seed, spawn_key=key))


def run_replication(config, n, rep_index):
    """One sample, both fits, both divergences, ``U`` and the decision.

    Library errors (degenerate fits, empty truncation sets, failed
    quadrature) mark the replication as skipped instead of propagating.
    """
    if not 0 <= rep_index < config.replications:
        raise DomainError(f"rep_index {rep_index} outside [0, {config.replications})")
    rng = replication_rng(config, n, rep_index)
    x = config.dgp.sample(n, rng)
    try:
        sample = Sample(x)
        pair = fit_pair(sample, ("gamma", "lognormal"), config.generator, config.settings)
        res = u_statistic(sample, pair, config.bootstrap_B, rng, config.level)
    except BregselError as exc:
        return ReplicationRecord(n, rep_index, skipped=f"{type(exc).__name__}: {exc}")
    g, ln = pair.model_a, pair.model_b
    return ReplicationRecord(n, rep_index, g.alpha, g.eta, ln.mu, ln.sigma,
                             res.d_a, res.d_b, res.u, res.decision)


def label_decisions(pi, decisions):
    """Percentages ``(first, indecisive, last)`` of a list of decisions.

    For ``pi == 1`` the triple reads (correct, indecisive, incorrect) with
    Gamma correct; for ``pi == 0`` the log-normal is correct. Otherwise the
    triple is (Gamma, indecisive, log-normal).
    """
    decisions = list(decisions)
    total = len(decisions)
    if total == 0:
        return (math.nan, math.nan, math.nan)
    a = sum(d is Decision.PREFER_A for d in decisions)
    b = sum(d is Decision.PREFER_B for d in decisions)
    ind = total - a - b
    if pi == 0:
        a, b = b, a
    return (100.0 * a / total, 100.0 * ind / total, 100.0 * b / total)


def _aggregate(config, n, records):
    kept = [r for r in records if r.skipped is None]
    skipped = len(records) - len(kept)
    means, sds = {}, {}
    for s in STATISTICS:
        vals = np.array([getattr(r, s) for r in kept])
        means[s] = float(vals.mean()) if vals.size else math.nan
        sds[s] = float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else math.nan)
    warning = None
    if skipped > SKIP_WARNING_FRACTION * len(records):
        warning = f"{skipped} of {len(records)} replications skipped at n={n}"
        warnings.warn(warning, RuntimeWarning, stacklevel=3)
    pcs = label_decisions(config.pi, [r.decision for r in kept])
    return TableRow(n, means, sds, pcs, skipped, len(records), warning)


def _run_chunk(args):
    config, jobs = args
    return [run_replication(config, n, r) for n, r in jobs]


def run_records(config, workers=1, chunk=25):
    """All replication records, ordered by ``(n, rep_index)``."""
    jobs = [(n, r) for n in config.sample_sizes for r in range(config.replications)]
    if workers <= 1:
        records = [run_replication(config, n, r) for n, r in jobs]
    else:
        chunks = [(config, jobs[i:i + chunk]) for i in range(0, len(jobs), chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [rec for part in pool.map(_run_chunk, chunks) for rec in part]
    return sorted(records, key=lambda r: (r.n, r.rep_index))


def run_experiment(config, workers=1, progress=None):
    """One :class:`TableRow` per sample size.

    Aggregation happens over records sorted by replication index, so the
    rows are bit-identical for any ``workers``.
    """
    records = run_records(config, workers)
    rows = []
    for n in config.sample_sizes:
        recs = [r for r in records if r.n == n]
        rows.append(_aggregate(config, n, recs))
        if progress:
            progress(rows[-1])
    return rows
