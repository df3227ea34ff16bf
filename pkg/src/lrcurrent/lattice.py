"""Cubic boxes, nearest-neighbour edges and reproducible disorder samples.

Disorder values are drawn from a counter-style generator keyed by
``(master seed, stream, lattice coordinates)``.  A value therefore depends
only on where it sits in Z^d, never on the box it was sampled in or on the
order of sampling: restricting a sample drawn on a big box to a smaller
box gives exactly the sample drawn on the smaller box.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

MAX_SITES = 5000

_STREAM_ONSITE = 1
_STREAM_EDGE = 2
_COORD_OFFSET = 1 << 31

ONSITE_LAWS = ("uniform", "rademacher", "point")
EDGE_LAWS = ("phase", "disc", "point")


class CapacityError(ValueError):
    """Requested object exceeds the configured size cap."""


class ShiftRangeError(ValueError):
    """A shifted sample would read values outside the sampled region."""


@dataclass(frozen=True)
class LatticeBox:
    """The box {-L..L}^d with lexicographically ordered sites."""

    d: int
    L: int
    sites: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        self.sites.setflags(write=False)

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def side(self) -> int:
        return 2 * self.L + 1

    def __len__(self) -> int:
        return self.n_sites

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return x.shape == (self.d,) and bool(np.all(np.abs(x) <= self.L))

    def index(self, x) -> int:
        """Index of site ``x``; raises ``KeyError`` if it is outside the box."""
        x = np.asarray(x, dtype=int)
        if not self.contains(x):
            raise KeyError(f"site {tuple(x)} outside box d={self.d}, L={self.L}")
        idx = 0
        for c in x:
            idx = idx * self.side + int(c) + self.L
        return idx

    def indices(self, points: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`index` for an ``(m, d)`` array of sites."""
        points = np.asarray(points, dtype=int).reshape(-1, self.d)
        if np.any(np.abs(points) > self.L):
            raise KeyError("some sites lie outside the box")
        idx = np.zeros(points.shape[0], dtype=int)
        for j in range(self.d):
            idx = idx * self.side + points[:, j] + self.L
        return idx

    def sub_indices(self, inner: "LatticeBox") -> np.ndarray:
        """Indices (in this box) of the sites of a smaller concentric box."""
        if inner.d != self.d or inner.L > self.L:
            raise ValueError("inner box is not contained in this box")
        return self.indices(inner.sites)


def build_box(d: int, L: int, max_sites: int = MAX_SITES) -> LatticeBox:
    if d < 1:
        raise ValueError("dimension must be positive")
    if L < 0:
        raise ValueError("half-width must be non-negative")
    n = (2 * L + 1) ** d
    if n > max_sites:
        raise CapacityError(f"box with {n} sites exceeds the cap of {max_sites}")
    axis = np.arange(-L, L + 1)
    sites = np.array(list(itertools.product(axis, repeat=d)), dtype=int).reshape(n, d)
    return LatticeBox(d=d, L=L, sites=sites)


@dataclass(frozen=True)
class EdgeSet:
    """Nearest-neighbour pairs, each stored once as (x, x + e_axis)."""

    tails: np.ndarray  # box indices of x
    heads: np.ndarray  # box indices of x + e_axis
    axes: np.ndarray   # 0-based axis j of each edge

    def __len__(self) -> int:
        return self.tails.shape[0]


def nearest_neighbor_edges(box: LatticeBox) -> EdgeSet:
    tails, heads, axes = [], [], []
    for j in range(box.d):
        mask = box.sites[:, j] < box.L
        t = np.nonzero(mask)[0]
        shifted = box.sites[mask].copy()
        shifted[:, j] += 1
        tails.append(t)
        heads.append(box.indices(shifted))
        axes.append(np.full(t.shape[0], j))
    tails = np.concatenate(tails)
    heads = np.concatenate(heads)
    axes = np.concatenate(axes)
    order = np.lexsort((axes, tails))
    return EdgeSet(tails=tails[order], heads=heads[order], axes=axes[order])


@dataclass(frozen=True)
class DisorderSpec:
    """Laws of the i.i.d. on-site values omega_1 and edge values omega_2."""

    onsite: str = "uniform"
    onsite_value: float = 0.0
    edge: str = "phase"
    edge_value: complex = 0.0
    seed: int = 0
    iid: bool = True

    def __post_init__(self):
        if self.onsite not in ONSITE_LAWS:
            raise ValueError(f"unknown on-site law {self.onsite!r}")
        if self.edge not in EDGE_LAWS:
            raise ValueError(f"unknown edge law {self.edge!r}")
        if not -1.0 <= self.onsite_value <= 1.0:
            raise ValueError("on-site point mass must lie in [-1, 1]")
        if abs(self.edge_value) > 1.0:
            raise ValueError("edge point mass must lie in the unit disc")
        if not self.iid:
            raise NotImplementedError("only i.i.d. disorder is supported")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def onsite_variance(self) -> float:
        """Var[omega_1(0)] of the configured law."""
        return {"uniform": 1.0 / 3.0, "rademacher": 1.0, "point": 0.0}[self.onsite]

    def with_seed(self, seed: int) -> "DisorderSpec":
        return DisorderSpec(self.onsite, self.onsite_value, self.edge,
                            self.edge_value, int(seed), self.iid)

    def to_dict(self) -> dict:
        ev = complex(self.edge_value)
        return {"onsite": self.onsite, "onsite_value": float(self.onsite_value),
                "edge": self.edge, "edge_value": [ev.real, ev.imag],
                "seed": int(self.seed), "iid": bool(self.iid)}

    @classmethod
    def from_dict(cls, data: dict) -> "DisorderSpec":
        data = dict(data)
        ev = data.get("edge_value", 0.0)
        if isinstance(ev, (list, tuple)):
            ev = complex(ev[0], ev[1])
        data["edge_value"] = complex(ev)
        return cls(**data)


@dataclass(frozen=True)
class DisorderSample:
    """One realisation of (omega_1, omega_2) over a box."""

    box: LatticeBox
    edges: EdgeSet = field(repr=False)
    onsite: np.ndarray = field(repr=False)  # omega_1 per site, real
    edge_values: np.ndarray = field(repr=False)  # omega_2 per canonical edge
    seed: int = 0
    spec: DisorderSpec | None = None

    def onsite_at(self, x) -> float:
        return float(self.onsite[self.box.index(x)])

    def edge_at(self, x, y) -> complex:
        """omega_2({x, y}) read in the orientation x -> y.

        The stored value belongs to the orientation (lower, upper); the
        reversed orientation carries its complex conjugate.
        """
        i, j = self.box.index(x), self.box.index(y)
        k = _edge_lookup(self.edges, i, j)
        if k is not None:
            return complex(self.edge_values[k])
        k = _edge_lookup(self.edges, j, i)
        if k is not None:
            return complex(np.conj(self.edge_values[k]))
        raise KeyError("sites are not nearest neighbours")


def _edge_lookup(edges: EdgeSet, i: int, j: int):
    hits = np.nonzero((edges.tails == i) & (edges.heads == j))[0]
    return int(hits[0]) if hits.size else None


def _keyed_uniforms(seed: int, stream: int, keys: np.ndarray, count: int) -> np.ndarray:
    """``count`` uniforms in [0, 1) for every row of integer ``keys``."""
    out = np.empty((keys.shape[0], count))
    for r, key in enumerate(keys):
        entropy = [seed, stream, *(int(k) + _COORD_OFFSET for k in key)]
        state = np.random.SeedSequence(entropy).generate_state(count, np.uint64)
        out[r] = (state >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    return out


def _into_disc(z: np.ndarray) -> np.ndarray:
    """Pull values whose modulus rounds above 1 back into the closed unit disc."""
    for _ in range(4):
        mod = np.abs(z)
        if not np.any(mod > 1.0):
            break
        z = np.where(mod > 1.0, z * ((1.0 - 2.0**-52) / mod), z)
    return z


def sample_disorder(spec: DisorderSpec, box: LatticeBox) -> DisorderSample:
    edges = nearest_neighbor_edges(box)

    if spec.onsite == "point":
        onsite = np.full(box.n_sites, float(spec.onsite_value))
    else:
        u = _keyed_uniforms(spec.seed, _STREAM_ONSITE, box.sites, 1)[:, 0]
        if spec.onsite == "uniform":
            onsite = 2.0 * u - 1.0
        else:
            onsite = np.where(u < 0.5, -1.0, 1.0)

    if spec.edge == "point":
        values = np.full(len(edges), complex(spec.edge_value), dtype=complex)
    else:
        keys = np.hstack([box.sites[edges.tails], edges.axes[:, None]])
        u = _keyed_uniforms(spec.seed, _STREAM_EDGE, keys, 2)
        phase = np.exp(2j * np.pi * u[:, 0])
        if spec.edge == "phase":
            values = phase
        else:
            values = np.sqrt(u[:, 1]) * phase
        values = _into_disc(values)

    return DisorderSample(box=box, edges=edges, onsite=onsite, edge_values=values,
                          seed=spec.seed, spec=spec)


def restrict_sample(sample: DisorderSample, box: LatticeBox) -> DisorderSample:
    """The same realisation read on a smaller concentric box."""
    return shift_sample(sample, np.zeros(box.d, dtype=int), box)


def shift_sample(sample: DisorderSample, v: Iterable[int], box: LatticeBox) -> DisorderSample:
    """Translate a realisation: omega'(x) = omega(x + v) on ``box``."""
    v = np.asarray(list(v), dtype=int)
    if v.shape != (box.d,) or box.d != sample.box.d:
        raise ValueError("shift vector and boxes must share the dimension")
    src = box.sites + v
    if np.any(np.abs(src) > sample.box.L):
        raise ShiftRangeError("shifted box leaves the sampled region")
    onsite = sample.onsite[sample.box.indices(src)]

    edges = nearest_neighbor_edges(box)
    tails_src = sample.box.indices(box.sites[edges.tails] + v)
    # canonical edges map to canonical edges under translation
    table = {(int(t), int(a)): k for k, (t, a) in
             enumerate(zip(sample.edges.tails, sample.edges.axes))}
    picks = np.array([table[(int(t), int(a))] for t, a in zip(tails_src, edges.axes)],
                     dtype=int)
    values = sample.edge_values[picks] if picks.size else np.zeros(0, dtype=complex)
    return DisorderSample(box=box, edges=edges, onsite=onsite, edge_values=values,
                          seed=sample.seed, spec=sample.spec)
