"""Synthetic two-tier data generator.

Background variables follow a stationary first-order autoregression (variance
1/d_Z, lag-one correlation rho), which the truth graph encodes as a directed
chain. Foreground variables are built in topological order as Rademacher-
weighted sums of their parents plus Gaussian noise calibrated to a target
signal-to-noise ratio. Three bivariate regimes cover a forced edge, a pair
separable by the background tier, and a pair confounded by hidden background
variables; the free regime draws everything at random.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graphs import TieredGraph, Tier, Vertex


class Regime(str, enum.Enum):
    EDGE = "edge"
    SEPARABLE = "separable"
    LATENT_CONFOUNDED = "latent_confounded"
    FREE = "free"


_BIVARIATE = (Regime.EDGE, Regime.SEPARABLE, Regime.LATENT_CONFOUNDED)

TRANSFORMS = ("quadratic", "sqrt_abs", "softplus", "relu")


@dataclass(frozen=True)
class SimSpec:
    """Simulation configuration.

    ``sparsity`` is the probability that a potential edge is ABSENT, so
    expected sparsity 1/2 puts each edge in with probability 1/2 and sparsity
    0.75 with probability 0.25. ``x_sparsity`` overrides the foreground-to-
    foreground edge sparsity; by default both tiers share one value.
    """

    n: int = 1000
    d_z: int = 50
    d_x: int = 2
    sparsity: float = 0.5
    rho: float = 0.25
    snr: float = 2.0
    nonlinear: bool = False
    regime: Regime = Regime.EDGE
    seed: int = 0
    x_sparsity: Optional[float] = None

    def __post_init__(self):
        if not (self.n >= 1 and self.d_z >= 1 and self.d_x >= 1):
            raise ValueError("n, d_z and d_x must be positive")
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in [0, 1]")
        if self.x_sparsity is not None and not 0.0 <= self.x_sparsity <= 1.0:
            raise ValueError("x_sparsity must lie in [0, 1]")
        if self.snr <= 0:
            raise ValueError("snr must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if Regime(self.regime) in _BIVARIATE and self.d_x != 2:
            raise ValueError(f"regime {Regime(self.regime).value} is bivariate; set d_x=2")

    @property
    def presence(self) -> float:
        return 1.0 - self.sparsity

    @property
    def x_presence(self) -> float:
        return 1.0 - (self.sparsity if self.x_sparsity is None else self.x_sparsity)


@dataclass
class Dataset:
    """One simulated draw: emitted table, tier labels, and the full truth."""

    values: np.ndarray  # n x (observed background + foreground)
    columns: list[str]
    tiers: dict  # column name -> "background" | "foreground"
    truth: TieredGraph  # includes hidden background vertices, if any
    hidden: tuple[int, ...]  # truth vertex ids not present in the table
    weights: dict  # (parent vertex, child vertex) -> coefficient
    spec: SimSpec
    col_vertices: tuple[int, ...] = ()  # emitted column -> truth vertex id

    @property
    def z_indices(self) -> list[int]:
        return [k for k, name in enumerate(self.columns) if self.tiers[name] == "background"]

    @property
    def x_indices(self) -> list[int]:
        return [k for k, name in enumerate(self.columns) if self.tiers[name] == "foreground"]

    def column_vertex(self, col: int) -> int:
        """Truth vertex id of an emitted column."""
        return self.col_vertices[col]


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    graph_rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0]))
    data_rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 1]))
    return graph_rng, data_rng


def gen_graph(spec: SimSpec) -> tuple[TieredGraph, tuple[int, ...]]:
    """Draw the truth graph; returns it with the ids of hidden background vertices.

    Vertices 0..d_z-1 are background (chained to encode the autoregression),
    d_z..d_z+d_x-1 are foreground. The latent-confounded regime marks half of
    the pair's shared background parents (rounded up) as hidden; they stay in
    the graph but are dropped from the emitted table.
    """
    rng, _ = _rngs(spec.seed)
    d_z, d_x = spec.d_z, spec.d_x
    vertices = [Vertex(k, Tier.BACKGROUND, f"Z{k + 1}") for k in range(d_z)]
    vertices += [Vertex(d_z + k, Tier.FOREGROUND, f"X{k + 1}") for k in range(d_x)]

    directed: set[tuple[int, int]] = set()
    if abs(spec.rho) > 0:
        directed.update((k, k + 1) for k in range(d_z - 1))

    zx_draw = rng.random((d_z, d_x))
    xx_draw = rng.random((d_x, d_x))
    regime = Regime(spec.regime)

    for z in range(d_z):
        for x in range(d_x):
            if zx_draw[z, x] < spec.presence:
                directed.add((z, d_z + x))
    if regime is Regime.FREE:
        for a in range(d_x):
            for b in range(a + 1, d_x):
                if xx_draw[a, b] < spec.x_presence:
                    directed.add((d_z + a, d_z + b))
    elif regime is Regime.EDGE:
        directed.add((d_z, d_z + 1))
    # separable / latent_confounded draw no foreground edge

    hidden: tuple[int, ...] = ()
    if regime is Regime.LATENT_CONFOUNDED:
        shared = sorted(
            z for z in range(d_z) if (z, d_z) in directed and (z, d_z + 1) in directed
        )
        if not shared:
            forced = int(rng.integers(0, d_z))
            directed.add((forced, d_z))
            directed.add((forced, d_z + 1))
            shared = [forced]
        n_hide = math.ceil(len(shared) / 2)
        hidden = tuple(sorted(rng.choice(shared, size=n_hide, replace=False).tolist()))

    return TieredGraph(vertices, directed, ()), hidden


def apply_transform(values: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise nonlinearity used on background columns."""
    z = np.asarray(values, dtype=float)
    if kind == "quadratic":
        return z**2
    if kind == "sqrt_abs":
        return np.sqrt(np.abs(z))
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    if kind == "relu":
        return np.maximum(0.0, z)
    raise ValueError(f"unknown transform {kind!r}")


def gen_dataset(spec: SimSpec) -> Dataset:
    """Draw one dataset; identical seeds give bitwise identical output.

    The autoregression is sampled by its recursion, so marginal variances are
    exactly 1/d_z in population. In nonlinear mode, 80% of background columns
    (rounded) feed their structural children through a random transform; the
    emitted table always holds the untransformed measurements.
    """
    truth, hidden = gen_graph(spec)
    _, rng = _rngs(spec.seed)
    n, d_z, d_x = spec.n, spec.d_z, spec.d_x

    sigma_z = math.sqrt(1.0 / d_z)
    eps = rng.standard_normal((n, d_z))
    z = np.empty((n, d_z))
    z[:, 0] = eps[:, 0] * sigma_z
    decay = math.sqrt(1.0 - spec.rho**2)
    for k in range(1, d_z):
        z[:, k] = spec.rho * z[:, k - 1] + eps[:, k] * sigma_z * decay

    transform_of: dict[int, str] = {}
    if spec.nonlinear:
        n_transformed = int(round(0.8 * d_z))
        chosen = rng.permutation(d_z)[:n_transformed]
        kinds = rng.integers(0, len(TRANSFORMS), size=n_transformed)
        transform_of = {int(c): TRANSFORMS[int(k)] for c, k in zip(chosen, kinds)}

    z_struct = z.copy()
    for col, kind in sorted(transform_of.items()):
        z_struct[:, col] = apply_transform(z[:, col], kind)

    x = np.empty((n, d_x))
    weights: dict[tuple[int, int], float] = {}
    for xi in range(d_x):
        vid = d_z + xi
        parents = sorted(truth.parents(vid))
        signal = np.zeros(n)
        for p in parents:
            beta = float(rng.integers(0, 2) * 2 - 1)
            weights[(p, vid)] = beta
            parent_col = z_struct[:, p] if p < d_z else x[:, p - d_z]
            signal = signal + beta * parent_col
        var_signal = float(signal.var())
        if parents and var_signal > 0:
            noise_sd = math.sqrt(var_signal / spec.snr)
        else:
            noise_sd = sigma_z
        x[:, xi] = signal + rng.standard_normal(n) * noise_sd

    keep_z = [k for k in range(d_z) if k not in set(hidden)]
    columns = [f"Z{k + 1}" for k in keep_z] + [f"X{k + 1}" for k in range(d_x)]
    tiers = {f"Z{k + 1}": "background" for k in keep_z}
    tiers.update({f"X{k + 1}": "foreground" for k in range(d_x)})
    values = np.column_stack([z[:, keep_z], x]) if keep_z else x.copy()

    col_vertices = tuple(keep_z + [d_z + k for k in range(d_x)])
    return Dataset(values, columns, tiers, truth, hidden, weights, spec, col_vertices)
