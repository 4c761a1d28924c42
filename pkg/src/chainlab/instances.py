"""Ready-made chains and families used across audits and experiments.

The "naive tree" is the two-class toy chain with disjoint source alphabets
whose measurement alphabets partially coincide: class 1 has prior 0.8 over
sources {0,1,2}, class 2 prior 0.2 over {3,4,5}, both conditionally uniform;
measurement 1.5 is reachable from source 1 (probability 0.4) and source 4
(probability 1), so the likelihood and the posterior disagree about it.
The remaining mass of source 1 is split evenly between its other two
measurements, which the original description leaves open.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .information import TableFamily
from .probability import (
    ConditionalTable,
    FiniteDistribution,
    PipelineChain,
    normalize,
)

NAIVE_TREE_Y_AMBIGUOUS = 1.5


def naive_tree_chain(restorer: Optional[ConditionalTable] = None) -> PipelineChain:
    prior = FiniteDistribution(("class1", "class2"), np.array([0.8, 0.2]))
    x_support = (0, 1, 2, 3, 4, 5)
    third = 1.0 / 3.0
    family = ConditionalTable(
        ("class1", "class2"),
        x_support,
        np.array(
            [
                [third, third, third, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, third, third, third],
            ]
        ),
    )
    y_support = (0.5, 1.5, 2.5, 3.5, 4.5)
    channel = ConditionalTable.from_rows(
        x_support,
        y_support,
        {
            0: {0.5: 1.0},
            1: {0.5: 0.3, 1.5: 0.4, 2.5: 0.3},
            2: {2.5: 1.0},
            3: {3.5: 1.0},
            4: {1.5: 1.0},
            5: {4.5: 1.0},
        },
    )
    return PipelineChain(prior, family, channel, restorer)


def naive_tree_partition() -> dict:
    return {"class1": {0, 1, 2}, "class2": {3, 4, 5}}


def random_stochastic_rows(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n_out), size=n_in)


def random_chain(
    rng: np.random.Generator,
    n_theta: int = 2,
    n_x: int = 4,
    n_y: int = 4,
    n_xhat: Optional[int] = 4,
    invertible_channel: bool = False,
) -> PipelineChain:
    """Random chain with Dirichlet(1) tables and numeric supports.

    With invertible_channel the degradation is a random injective relabeling
    (so no class information is lost at the measurement stage).
    """
    prior = normalize(rng.dirichlet(np.ones(n_theta)), support=tuple(range(n_theta)))
    family = ConditionalTable(
        prior.support, tuple(range(n_x)), random_stochastic_rows(rng, n_theta, n_x)
    )
    if invertible_channel:
        n_y = max(n_y, n_x)
        perm = rng.permutation(n_y)[:n_x]
        rows = np.zeros((n_x, n_y))
        rows[np.arange(n_x), perm] = 1.0
        channel = ConditionalTable(family.output_support, tuple(range(n_y)), rows)
    else:
        channel = ConditionalTable(
            family.output_support, tuple(range(n_y)), random_stochastic_rows(rng, n_x, n_y)
        )
    restorer = None
    if n_xhat is not None:
        restorer = ConditionalTable(
            channel.output_support, tuple(range(n_xhat)), random_stochastic_rows(rng, n_y, n_xhat)
        )
    return PipelineChain(prior, family, channel, restorer)


def random_table_family(
    rng: np.random.Generator, n_theta: int = 3, n_x: int = 5
) -> TableFamily:
    """Grid-backed family with Dirichlet(1) rows on an integer theta grid."""
    rows = random_stochastic_rows(rng, n_theta, n_x)
    return TableFamily.from_rows(np.arange(n_theta, dtype=np.float64), rows)


def sufficient_statistic_instance(
    rng: np.random.Generator,
    n_theta: int = 3,
    n_t: int = 3,
    max_split: int = 3,
) -> tuple:
    """Family plus a statistic that is sufficient by construction.

    Outcomes are generated by splitting each value of a base family through
    class-independent split weights, so collapsing them back (the statistic)
    preserves all class information. Returns (family, statistic_map, chain)
    where the chain's degradation applies the statistic deterministically.
    """
    base = random_stochastic_rows(rng, n_theta, n_t)  # p(t | theta)
    splits = [int(rng.integers(1, max_split + 1)) for _ in range(n_t)]
    x_rows = []
    statistic = {}
    x = 0
    for t, k in enumerate(splits):
        w = rng.dirichlet(np.ones(k))
        for j in range(k):
            x_rows.append(base[:, t] * w[j])
            statistic[x] = t
            x += 1
    rows = np.stack(x_rows, axis=1)  # (theta, x)
    family = TableFamily.from_rows(np.arange(n_theta, dtype=np.float64), rows)
    theta_support = tuple(float(v) for v in range(n_theta))
    prior = normalize(rng.dirichlet(np.ones(n_theta)), support=theta_support)
    fam_table = ConditionalTable(prior.support, family.support, rows)
    channel = ConditionalTable.deterministic(
        family.support, tuple(range(n_t)), statistic
    )
    chain = PipelineChain(prior, fam_table, channel, None)
    return family, statistic, chain


def two_toss_coin_family(grid=(0.2, 0.35, 0.5, 0.65, 0.8)) -> TableFamily:
    """Two independent tosses of a coin with unknown heads probability.

    Outcomes are 'tt', 'th', 'ht', 'hh'; the head count is the classic
    sufficient statistic.
    """
    grid = np.asarray(grid, dtype=np.float64)
    rows = np.stack(
        [
            np.array([(1 - p) ** 2, (1 - p) * p, p * (1 - p), p**2])
            for p in grid
        ]
    )
    return TableFamily.from_rows(grid, rows, support=("tt", "th", "ht", "hh"))


def head_count_statistic(outcome: str) -> int:
    return outcome.count("h")


def first_toss_estimator(outcome: str) -> float:
    return 1.0 if outcome[0] == "h" else 0.0
