"""Vascular forest growth on iterated oxygen/VEGF fields.

The forest is a set of rooted binary trees. Tips advance by a fixed step
along a weighted blend of their previous direction, the VEGF gradient, and
a short-range repulsion from existing segments; they bifurcate where VEGF
is high and starve where it is depleted. Radii are assigned afterwards from
the leaves up with the generalized cube-law (exponent gamma).

Tips sense the field at a lookahead point ahead of their position: a tip
sits inside its own freshly laid oxygen splat, so sampling at the tip
itself would starve every tip immediately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import LayerParams, SimConfig
from .errors import ConfigError, EmptyForest, GridMismatch
from .layout import (
    GridSpec,
    RetinaLayout,
    ScalarField2D,
    _check_grid_covers,
    grid_for,
    sample_bilinear,
)

LAYERS = ("SVC", "DVC")

# contributions beyond this many sigmas are dropped when splatting oxygen
_SPLAT_CUTOFF_SIGMAS = 4.0
# rebuild the neighbour lookup tree once this fraction of nodes is new
_TREE_SLACK = 1 / 16


@dataclass(frozen=True)
class VesselNode:
    """Read-only view of one node of a VesselForest."""

    id: int
    position: np.ndarray  # (3,) mm; z is the layer depth
    radius_mm: float
    parent: int | None
    children: tuple[int, ...]


class VesselForest:
    """Rooted binary trees stored columnar for fast vectorized growth."""

    def __init__(self, layer: str, rng_seed: int, capacity: int = 1024):
        self.layer = layer
        self.rng_seed = rng_seed
        self.roots: list[int] = []
        self.active: list[int] = []  # ids of live tips, ascending
        self._pos = np.zeros((capacity, 3))
        self._parent = np.full(capacity, -1, dtype=np.int64)
        self._radius = np.zeros(capacity)
        self._nchild = np.zeros(capacity, dtype=np.int64)
        self._n = 0
        self._tree: tuple[int, cKDTree] | None = None

    def __len__(self) -> int:
        return self._n

    @property
    def positions(self) -> np.ndarray:
        return self._pos[: self._n]

    @property
    def parents(self) -> np.ndarray:
        return self._parent[: self._n]

    @property
    def radii(self) -> np.ndarray:
        return self._radius[: self._n]

    @property
    def n_segments(self) -> int:
        return self._n - len(self.roots)

    @property
    def leaf_count(self) -> int:
        return int(np.count_nonzero(self._nchild[: self._n] == 0))

    def node(self, node_id: int) -> VesselNode:
        children = tuple(int(c) for c in np.flatnonzero(self.parents == node_id))
        parent = int(self._parent[node_id])
        return VesselNode(
            id=node_id,
            position=self._pos[node_id].copy(),
            radius_mm=float(self._radius[node_id]),
            parent=None if parent < 0 else parent,
            children=children,
        )

    def nodes(self):
        for i in range(self._n):
            yield self.node(i)

    def segment_child_ids(self) -> np.ndarray:
        """Ids of all non-root nodes; segment i is (parent[i], i)."""
        return np.flatnonzero(self._parent[: self._n] >= 0)

    def _ensure(self, extra: int) -> None:
        need = self._n + extra
        if need <= len(self._radius):
            return
        cap = max(need, 2 * len(self._radius))
        self._pos = np.resize(self._pos, (cap, 3))
        self._parent = np.resize(self._parent, cap)
        self._radius = np.resize(self._radius, cap)
        self._nchild = np.resize(self._nchild, cap)

    def add_root(self, position, radius: float) -> int:
        self._ensure(1)
        i = self._n
        self._pos[i] = position
        self._parent[i] = -1
        self._radius[i] = radius
        self._nchild[i] = 0
        self._n += 1
        self.roots.append(i)
        return i

    def add_nodes(self, positions: np.ndarray, parents: np.ndarray, radius: float) -> np.ndarray:
        m = len(parents)
        if m == 0:
            return np.empty(0, dtype=np.int64)
        if np.any(self._nchild[parents] + np.bincount(parents, minlength=self._n)[parents] > 2):
            raise ConfigError("a vessel node cannot have more than two children")
        self._ensure(m)
        ids = np.arange(self._n, self._n + m, dtype=np.int64)
        self._pos[ids] = positions
        self._parent[ids] = parents
        self._radius[ids] = radius
        self._nchild[ids] = 0
        np.add.at(self._nchild, parents, 1)
        self._n += m
        return ids

    def neighbor_tree(self) -> tuple[int, cKDTree] | None:
        """KD-tree over xy node positions, rebuilt lazily with bounded slack."""
        if self._n == 0:
            return None
        if self._tree is None or self._n - self._tree[0] > max(64, int(self._n * _TREE_SLACK)):
            self._tree = (self._n, cKDTree(self._pos[: self._n, :2]))
        return self._tree


@dataclass
class TraceRecord:
    layer: str
    iteration: int
    terminal_count: int
    vegf_mass: float
    segments_added: int


@dataclass
class GrowthTrace:
    """Per-iteration diagnostics of a simulation run."""

    records: list[TraceRecord] = field(default_factory=list)

    def for_layer(self, layer: str) -> list[TraceRecord]:
        return [r for r in self.records if r.layer == layer]


def _layer_params(config, layer: str) -> LayerParams:
    if isinstance(config, LayerParams):
        return config
    return config.layer_params(layer)


def init_forest(config: SimConfig, layout: RetinaLayout, seed: int, layer: str = "SVC") -> VesselForest:
    """Seed one forest: roots uniform in the optic disc, each with one
    initial segment pointing toward the FAZ side."""
    params = _layer_params(config, layer)
    if params.trees < 1:
        raise ConfigError("trees_per_layer must be >= 1")
    rng = np.random.default_rng(seed)
    forest = VesselForest(params.layer, seed)
    n = params.trees
    r = layout.disc_radius_mm * np.sqrt(rng.random(n))
    theta = 2 * np.pi * rng.random(n)
    cx, cy = layout.disc_center
    fx, fy = layout.faz_center
    for i in range(n):
        px = cx + r[i] * np.cos(theta[i])
        py = cy + r[i] * np.sin(theta[i])
        root = forest.add_root((px, py, params.depth_mm), params.root_radius_mm)
        d = np.array([fx - px, fy - py])
        d /= np.linalg.norm(d)
        tip = np.array(
            [px + params.step_length_mm * d[0], py + params.step_length_mm * d[1], params.depth_mm]
        )
        ids = forest.add_nodes(tip[None, :], np.array([root]), params.root_radius_mm)
        forest.active.append(int(ids[0]))
    return forest


def _splat_segment(acc: np.ndarray, a: np.ndarray, b: np.ndarray, sigma: float, cell: float) -> None:
    """Add exp(-d^2 / 2 sigma^2) of the capsule distance to ``acc`` in a local box."""
    rows, cols = acc.shape
    reach = _SPLAT_CUTOFF_SIGMAS * sigma
    x_lo = int(np.floor((min(a[0], b[0]) - reach) / cell - 0.5))
    x_hi = int(np.ceil((max(a[0], b[0]) + reach) / cell - 0.5))
    y_lo = int(np.floor((min(a[1], b[1]) - reach) / cell - 0.5))
    y_hi = int(np.ceil((max(a[1], b[1]) + reach) / cell - 0.5))
    x_lo = max(x_lo, 0)
    y_lo = max(y_lo, 0)
    x_hi = min(x_hi, cols - 1)
    y_hi = min(y_hi, rows - 1)
    if x_lo > x_hi or y_lo > y_hi:
        return
    xs = (np.arange(x_lo, x_hi + 1) + 0.5) * cell
    ys = (np.arange(y_lo, y_hi + 1) + 0.5) * cell
    px = xs[None, :] - a[0]
    py = ys[:, None] - a[1]
    abx = b[0] - a[0]
    aby = b[1] - a[1]
    l2 = abx * abx + aby * aby
    if l2 > 0:
        t = np.clip((px * abx + py * aby) / l2, 0.0, 1.0)
    else:
        t = 0.0
    dx = px - t * abx
    dy = py - t * aby
    d2 = dx * dx + dy * dy
    acc[y_lo : y_hi + 1, x_lo : x_hi + 1] += np.exp(-d2 / (2.0 * sigma * sigma))


def update_oxygen(
    forest: VesselForest,
    layout: RetinaLayout,
    grid: GridSpec,
    oxygen_radius_mm: float,
) -> ScalarField2D:
    """Oxygen per cell: clamp(sum over segments of exp(-d^2/2 sigma^2), 0, 1),
    d being the distance from the cell centre to the segment's xy projection.
    Contributions beyond 4 sigma are dropped. Empty forests give zero fields."""
    _check_grid_covers(layout, grid)
    acc = np.zeros((grid.rows, grid.cols))
    pos = forest.positions
    parents = forest.parents
    for child in forest.segment_child_ids():
        _splat_segment(acc, pos[parents[child]], pos[child], oxygen_radius_mm, grid.cell_size_mm)
    return ScalarField2D(np.clip(acc, 0.0, 1.0), grid.cell_size_mm)


def update_vegf(oxygen: ScalarField2D, suppression: ScalarField2D) -> ScalarField2D:
    """VEGF = max(0, 1 - oxygen) * suppression, cellwise."""
    if oxygen.grid_shape != suppression.grid_shape or not math.isclose(
        oxygen.cell_size_mm, suppression.cell_size_mm
    ):
        raise GridMismatch("oxygen and suppression fields must share a grid")
    vals = np.maximum(0.0, 1.0 - oxygen.values) * suppression.values
    return ScalarField2D(vals, oxygen.cell_size_mm)


def _repulsion(forest: VesselForest, ids: np.ndarray, P: np.ndarray, step: float) -> np.ndarray:
    """Unit force away from the nearest existing segment within 2 steps,
    scaled by step/d; the tip's own two trailing segments are ignored."""
    out = np.zeros_like(P)
    cached = forest.neighbor_tree()
    if cached is None:
        return out
    tree_size, tree = cached
    k = min(6, tree_size)
    if k == 0:
        return out
    _, nn = tree.query(P, k=k)
    if nn.ndim == 1:
        nn = nn[:, None]
    pos = forest.positions[:, :2]
    parents = forest.parents
    n, kk = nn.shape
    # candidate segment per (tip, neighbour): edge (parent[j], j); roots have none
    child = nn
    par = parents[child]
    valid = par >= 0
    # exclude the tip's own trailing chain (itself, parent, grandparent)
    own0 = ids[:, None]
    own1 = parents[ids][:, None]
    own2 = np.where(own1 >= 0, parents[np.maximum(own1, 0)], -1)
    valid &= (child != own0) & (child != own1) & (child != own2)
    a = pos[np.maximum(par, 0)]
    b = pos[child]
    ab = b - a
    l2 = np.sum(ab * ab, axis=2)
    ap = P[:, None, :] - a
    t = np.clip(np.sum(ap * ab, axis=2) / np.maximum(l2, 1e-30), 0.0, 1.0)
    q = a + t[:, :, None] * ab
    dq = P[:, None, :] - q
    d = np.sqrt(np.sum(dq * dq, axis=2))
    d = np.where(valid, d, np.inf)
    best = np.argmin(d, axis=1)
    rows = np.arange(n)
    dmin = d[rows, best]
    hit = dmin <= 2.0 * step
    if not np.any(hit):
        return out
    qbest = q[rows, best]
    u = P - qbest
    dsafe = np.maximum(dmin, 0.25 * step)
    mag = np.clip(step / dsafe, 0.0, 4.0)
    norm = np.maximum(np.linalg.norm(u, axis=1), 1e-30)
    out[hit] = (u[hit] / norm[hit, None]) * mag[hit, None]
    return out


def _rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.column_stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1]])


def grow_step(
    forest: VesselForest,
    vegf: ScalarField2D,
    config,
    rng: np.random.Generator,
    layout: RetinaLayout | None = None,
) -> VesselForest:
    """Advance every active tip once: extend, bifurcate, or deactivate.

    Tips are processed in ascending node-id order so the random stream is
    reproducible. The forest is updated in place and returned.
    """
    params = _layer_params(config, forest.layer)
    if not forest.active:
        return forest
    ids = np.asarray(sorted(forest.active), dtype=np.int64)
    P = forest.positions[ids, :2]
    depth = forest.positions[ids, 2]
    PP = forest.positions[forest.parents[ids], :2]
    d_prev = P - PP
    d_prev /= np.maximum(np.linalg.norm(d_prev, axis=1, keepdims=True), 1e-30)

    look = P + params.sense_distance_mm * d_prev
    v = vegf.sample(look)
    gy, gx = np.gradient(vegf.values, vegf.cell_size_mm)
    G = np.column_stack(
        [sample_bilinear(gx, look, vegf.cell_size_mm), sample_bilinear(gy, look, vegf.cell_size_mm)]
    )
    if params.w_repulsion > 0:
        R = _repulsion(forest, ids, P, params.step_length_mm)
    else:
        R = np.zeros_like(P)

    dirs = params.w_persistence * d_prev + params.w_gradient * G + params.w_repulsion * R
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    fallback = norms[:, 0] < 1e-12
    dirs = np.where(fallback[:, None], d_prev, dirs / np.maximum(norms, 1e-30))

    u = rng.random(len(ids))
    branch = (v >= params.vegf_threshold) & (u < params.branch_probability)
    starve = v < params.deactivation_threshold
    extend = ~branch & ~starve

    step = params.step_length_mm
    half = math.radians(params.bifurcation_angle_deg) / 2.0

    # assemble candidate children in ascending-tip order
    cand_pos = []
    cand_parent = []
    order = np.arange(len(ids))
    for i in order[branch]:
        for rot in (_rotate(dirs[i : i + 1], half), _rotate(dirs[i : i + 1], -half)):
            cand_pos.append(
                (P[i, 0] + step * rot[0, 0], P[i, 1] + step * rot[0, 1], depth[i])
            )
            cand_parent.append(ids[i])
    for i in order[extend]:
        cand_pos.append((P[i, 0] + step * dirs[i, 0], P[i, 1] + step * dirs[i, 1], depth[i]))
        cand_parent.append(ids[i])

    if cand_pos:
        cand_pos = np.asarray(cand_pos)
        cand_parent = np.asarray(cand_parent, dtype=np.int64)
        if layout is not None:
            ok = layout.inner_distance(cand_pos[:, :2]) > 0.0
        else:
            extent = vegf.cell_size_mm * vegf.grid_shape[0]
            ok = np.all((cand_pos[:, :2] > 0) & (cand_pos[:, :2] < extent), axis=1)
        new_ids = forest.add_nodes(cand_pos[ok], cand_parent[ok], params.root_radius_mm)
    else:
        new_ids = np.empty(0, dtype=np.int64)

    forest.active = [int(i) for i in new_ids]
    return forest


def assign_radii(forest: VesselForest, config) -> VesselForest:
    """Leaves get the terminal radius; parents follow r^g = sum of child r^g;
    pass-through nodes inherit their child's radius. In place, returned."""
    params = _layer_params(config, forest.layer)
    n = len(forest)
    if n == 0:
        return forest
    children: list[list[int]] = [[] for _ in range(n)]
    parents = forest.parents
    for i in range(n):
        p = parents[i]
        if p >= 0:
            children[p].append(i)
    order: list[int] = []
    stack = list(forest.roots)
    while stack:
        i = stack.pop()
        order.append(i)
        stack.extend(children[i])
    g = params.murray_exponent
    radii = forest.radii
    for i in reversed(order):
        kids = children[i]
        if not kids:
            radii[i] = params.terminal_radius_mm
        elif len(kids) == 1:
            radii[i] = radii[kids[0]]
        else:
            radii[i] = (radii[kids[0]] ** g + radii[kids[1]] ** g) ** (1.0 / g)
    return forest


def simulate(config: SimConfig, layout: RetinaLayout) -> tuple[dict[str, VesselForest], GrowthTrace]:
    """Grow the SVC and DVC forests independently; deterministic in
    (config, layout, config.seed). Returns the forests keyed by layer tag
    plus the per-iteration trace."""
    config.validate()
    trace = GrowthTrace()
    forests: dict[str, VesselForest] = {}
    grid = grid_for(layout, config.grid_resolution)
    suppression = vegf_suppression_cached(layout, grid)
    cell_area = grid.cell_size_mm**2
    for layer_index, layer in enumerate(LAYERS):
        params = config.layer_params(layer)
        seed_seq = np.random.SeedSequence([int(config.seed), layer_index])
        layer_seed = int(seed_seq.generate_state(1)[0])
        rng = np.random.default_rng(seed_seq)
        forest = init_forest(params, layout, layer_seed, layer)
        acc = np.zeros((grid.rows, grid.cols))
        splatted = 0
        for it in range(params.max_iterations):
            if not forest.active:
                break
            # incremental oxygen: each segment is splatted exactly once
            pos = forest.positions
            parents = forest.parents
            for child in forest.segment_child_ids()[splatted:]:
                _splat_segment(
                    acc, pos[parents[child]], pos[child], params.oxygen_radius_mm, grid.cell_size_mm
                )
            splatted = forest.n_segments
            oxygen = ScalarField2D(np.clip(acc, 0.0, 1.0), grid.cell_size_mm)
            vegf = update_vegf(oxygen, suppression)
            before = len(forest)
            grow_step(forest, vegf, params, rng, layout)
            trace.records.append(
                TraceRecord(
                    layer=layer,
                    iteration=it,
                    terminal_count=forest.leaf_count,
                    vegf_mass=float(np.sum(vegf.values) * cell_area),
                    segments_added=len(forest) - before,
                )
            )
            if forest.leaf_count >= params.target_terminal_count:
                break
        assign_radii(forest, params)
        forests[layer] = forest
    return forests, trace


# suppression fields are pure functions of (layout, grid); cache the last one
_SUPPRESSION_CACHE: dict[tuple, ScalarField2D] = {}


def vegf_suppression_cached(layout: RetinaLayout, grid: GridSpec) -> ScalarField2D:
    key = (layout, grid)
    hit = _SUPPRESSION_CACHE.get(key)
    if hit is None:
        from .layout import vegf_suppression

        hit = vegf_suppression(layout, grid)
        _SUPPRESSION_CACHE.clear()
        _SUPPRESSION_CACHE[key] = hit
    return hit


def forest_to_text(forest: VesselForest) -> str:
    """Line format ``id parent x y z radius``; parent is -1 for roots."""
    lines = []
    pos = forest.positions
    radii = forest.radii
    parents = forest.parents
    for i in range(len(forest)):
        lines.append(
            f"{i} {int(parents[i])} {pos[i, 0]:.9g} {pos[i, 1]:.9g} {pos[i, 2]:.9g} {radii[i]:.9g}"
        )
    return "\n".join(lines) + "\n"


def optimal_total_angle(r_left: float, r_right: float, gamma: float = 3.0) -> float:
    """Volume-minimising total opening angle (radians) for child radii.

    cos(theta) = (rp^4 - rl^4 - rr^4) / (2 rl^2 rr^2) with rp from the
    cube-law; the symmetric gamma=3 case gives about 74.9 degrees.
    """
    rp = (r_left**gamma + r_right**gamma) ** (1.0 / gamma)
    c = (rp**4 - r_left**4 - r_right**4) / (2.0 * r_left**2 * r_right**2)
    return math.acos(min(1.0, max(-1.0, c)))
