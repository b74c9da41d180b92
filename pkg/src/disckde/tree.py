"""Partition tree built from carving hashes, and its query walk.

Each internal node carves its point set with a random ball. Points well
inside (``Cap(1)``) get a coreset for queries that land outside, points well
outside (``Cap(0)``) get one for queries that land inside, and everything
except the cap on the query's side is passed to that child. A query walks one
root-to-leaf path and sums one coreset estimate per node plus a final leaf or
far-field term.

Trees are stored flat: per-node, per-coreset and per-far-field records live in
numpy arrays and coreset members are slices of one shared index pool. This
keeps a tree with millions of nodes within a few hundred bytes per node.
``TreeNode`` is a read-only view onto one node.
"""

from __future__ import annotations

import array
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .balance import Coreset, coreset_size_bound, process_captured, query_captured
from .carving import BOUNDARY, CarvingParams, alpha_for, hash_eval, sample_carving
from .core import EXACT_PHI_LIMIT, BuildParams, ShellGeometry, as_dataset, as_point, aspect_ratio_bound
from .embedding import Side
from .errors import BuildError, ConfigError, ContractError, StructuralError
from .farfield import FarFieldDS, preprocess_far, query_far
from .kernels import RadialKernel, kernel_eval

OK = "ok"
FAIL = "fail"

_SIDE_CODE = {Side.INNER: 0, Side.OUTER: 1}
_SIDES = (Side.INNER, Side.OUTER)


class _Grow:
    """Append-only typed column (optionally ``width`` values per row) backed by array.array."""

    _CODES = {np.dtype(np.int64): "q", np.dtype(np.int32): "i", np.dtype(np.int8): "b", np.dtype(np.float64): "d"}

    def __init__(self, dtype, width: Optional[int] = None):
        self.dtype = np.dtype(dtype)
        self.width = width
        self.buf = array.array(self._CODES[self.dtype])

    @property
    def n(self) -> int:
        return len(self.buf) // (self.width or 1)

    def append(self, value) -> None:
        if self.width is None:
            self.buf.append(value)
        else:
            self.buf.extend(value)

    def extend_array(self, values: np.ndarray) -> int:
        start = self.n
        self.buf.frombytes(np.ascontiguousarray(values, dtype=self.dtype).tobytes())
        return start

    def set(self, row: int, col: int, value) -> None:
        self.buf[row * self.width + col] = value

    def finish(self) -> np.ndarray:
        out = np.frombuffer(self.buf, dtype=self.dtype).copy() if len(self.buf) else np.empty(0, self.dtype)
        return out if self.width is None else out.reshape(-1, self.width)


# Field layout of the flat arrays; also the serialization order.
NODE_FIELDS = (
    ("node_cen", np.int64, None),
    ("node_rad", np.float64, None),
    ("node_size", np.int64, None),
    ("node_depth", np.int32, None),
    ("node_r", np.float64, None),
    ("node_child", np.int64, 2),
    ("node_ball", np.int64, 2),
    ("node_far", np.int64, None),
)
CORESET_FIELDS = (
    ("cs_node", np.int64, None),
    ("cs_far", np.int64, None),
    ("cs_off", np.int64, None),
    ("cs_len", np.int64, None),
    ("cs_T", np.int32, None),
    ("cs_side", np.int8, None),
    ("cs_rmin", np.float64, None),
    ("cs_rin", np.float64, None),
    ("cs_rout", np.float64, None),
    ("cs_rmax", np.float64, None),
    ("cs_source", np.int64, None),
)
FAR_FIELDS = (
    ("far_rmin", np.float64, None),
    ("far_rin", np.float64, None),
    ("far_base", np.float64, None),
    ("far_size", np.int64, None),
    ("far_first", np.int64, None),
    ("far_rings", np.int32, None),
    ("far_viol", np.int64, None),
)
MATRIX_FIELDS = (("node_c", np.float64), ("far_cen", np.float64))
POOL_DTYPE = np.int32


class FlatTree:
    """One partition tree over ``data``; all records are numpy arrays."""

    def __init__(self, data: np.ndarray, kernel: RadialKernel, alpha: float, arrays: dict, stats: dict):
        self.data = data
        self.kernel = kernel
        self.alpha = float(alpha)
        self.stats = stats
        for name, arr in arrays.items():
            setattr(self, name, arr)

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    @property
    def num_nodes(self) -> int:
        return int(self.node_rad.shape[0])

    @property
    def root(self) -> "TreeNode":
        return TreeNode(self, 0)

    def arrays(self) -> dict:
        names = [f[0] for f in NODE_FIELDS + CORESET_FIELDS + FAR_FIELDS + MATRIX_FIELDS]
        out = {name: getattr(self, name) for name in names}
        out["pool"] = self.pool
        return out

    def carving(self, i: int) -> CarvingParams:
        return CarvingParams(self.node_c[i], float(self.node_r[i]), 2.0 * float(self.node_rad[i]), self.alpha)

    def center(self, i: int) -> np.ndarray:
        return self.data[self.node_cen[i]]

    def coreset(self, j: int) -> Coreset:
        node = self.cs_node[j]
        if node >= 0:
            center = self.center(node) + self.node_c[node]
        else:
            center = self.far_cen[self.cs_far[j]]
        geom = ShellGeometry(
            center, float(self.cs_rmin[j]), float(self.cs_rin[j]), float(self.cs_rout[j]), float(self.cs_rmax[j])
        )
        off, ln = int(self.cs_off[j]), int(self.cs_len[j])
        return Coreset(
            self.pool[off : off + ln], int(self.cs_T[j]), _SIDES[self.cs_side[j]], geom,
            self.kernel, int(self.cs_source[j]), self.data,
        )

    def far(self, f: int) -> FarFieldDS:
        first = int(self.far_first[f])
        rings = tuple(self.coreset(first + h) for h in range(int(self.far_rings[f])))
        return FarFieldDS(
            self.far_cen[f], float(self.far_rmin[f]), float(self.far_rin[f]), float(self.far_base[f]),
            int(self.far_size[f]), rings, int(self.far_viol[f]),
        )


class TreeNode:
    """Read-only view of node ``index`` in a FlatTree."""

    __slots__ = ("tree", "index")

    def __init__(self, tree: FlatTree, index: int):
        self.tree = tree
        self.index = index

    @property
    def cen(self) -> np.ndarray:
        return self.tree.center(self.index)

    @property
    def rad(self) -> float:
        return float(self.tree.node_rad[self.index])

    @property
    def R(self) -> float:
        return 2.0 * self.rad

    @property
    def size(self) -> int:
        return int(self.tree.node_size[self.index])

    @property
    def depth(self) -> int:
        return int(self.tree.node_depth[self.index])

    @property
    def is_leaf(self) -> bool:
        return self.rad == 0.0

    @property
    def carve(self) -> Optional[CarvingParams]:
        return None if self.is_leaf else self.tree.carving(self.index)

    @property
    def newcen(self) -> Optional[np.ndarray]:
        return None if self.is_leaf else self.cen + self.tree.node_c[self.index]

    @property
    def inner_ball(self) -> list:
        return [None if j < 0 else self.tree.coreset(int(j)) for j in self.tree.node_ball[self.index]]

    @property
    def child(self) -> list:
        return [None if j < 0 else TreeNode(self.tree, int(j)) for j in self.tree.node_child[self.index]]

    @property
    def far_ds(self) -> Optional[FarFieldDS]:
        f = int(self.tree.node_far[self.index])
        return None if f < 0 else self.tree.far(f)


@dataclass
class QueryResult:
    estimate: Optional[float]
    status: str
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OK


def depth_cap(n: int, d: int, phi: float) -> float:
    lp = max(math.log(phi), math.e)
    return 20.0 * math.sqrt(d) * math.log(n * lp) * lp


def resolve_phi(P: np.ndarray, params: BuildParams) -> float:
    if params.phi is not None:
        return float(params.phi)
    if P.shape[0] > EXACT_PHI_LIMIT:
        raise ConfigError(
            f"dataset has {P.shape[0]} points; supply phi explicitly above {EXACT_PHI_LIMIT}"
        )
    return aspect_ratio_bound(P)


def _new_stats() -> dict:
    return {
        "nodes": 0,
        "leaves": 0,
        "max_depth": 0,
        "coresets": 0,
        "coreset_points": 0,
        "halved_coresets": 0,
        "far_structures": 0,
        "pass_through": 0,
        "side_violations": 0,
        "size_bound_violations": 0,
        "max_size_ratio": 0.0,
    }


class _Builder:
    def __init__(self, data, k, params, alpha):
        self.data = data
        self.k = k
        self.params = params
        self.alpha = alpha
        d = data.shape[1]
        self.cols = {name: _Grow(dt, w) for name, dt, w in NODE_FIELDS + CORESET_FIELDS + FAR_FIELDS}
        self.node_c = _Grow(np.float64, d)
        self.far_cen = _Grow(np.float64, d)
        self.pool = _Grow(POOL_DTYPE)
        self.stats = _new_stats()

    def add_coreset(self, cs: Coreset, node: int, far: int, pooled: Optional[tuple] = None) -> int:
        c = self.cols
        if pooled is not None and cs.ids is pooled[0]:
            off = pooled[1]
        else:
            off = self.pool.extend_array(cs.ids)
        c["cs_node"].append(node)
        c["cs_far"].append(far)
        c["cs_off"].append(off)
        c["cs_len"].append(cs.size)
        c["cs_T"].append(cs.weight_log2)
        c["cs_side"].append(_SIDE_CODE[cs.side])
        g = cs.geom
        c["cs_rmin"].append(g.r_min)
        c["cs_rin"].append(g.r_in)
        c["cs_rout"].append(g.r_out)
        c["cs_rmax"].append(g.r_max)
        c["cs_source"].append(cs.source_size)
        self._record(cs)
        return c["cs_node"].n - 1

    def _record(self, cs: Coreset) -> None:
        st, p = self.stats, self.params
        st["coresets"] += 1
        st["coreset_points"] += cs.size
        if cs.weight_log2 > 0:
            st["halved_coresets"] += 1
        if cs.source_size > 0:
            bound = coreset_size_bound(cs.source_size, cs.geom, cs.kernel, p.eps, p.xi, p.delta)
            ratio = cs.size / bound
            st["max_size_ratio"] = max(st["max_size_ratio"], ratio)
            # A bound below one cannot be met by a nonempty set; only larger sets count.
            if ratio > 1.0 and cs.size > 1:
                st["size_bound_violations"] += 1
                raise BuildError(
                    f"coreset of {cs.size} points from {cs.source_size} exceeds its size bound {bound:.4g}"
                )

    def cap_coreset(self, ids, norms, b, node, R, newcen, carve, rng) -> int:
        """Coreset of Cap(b) around the carving center (b=1 inner side, b=0 outer side)."""
        if ids.size == 0:
            return -1
        w = carve.half_width
        r_in, r_out = carve.r - w, carve.r + w
        r_min, r_max = R / 100.0, 3.0 * R
        if b == 1:
            low = float(norms.min())
            if low < r_min:
                self.stats["side_violations"] += int(np.count_nonzero(norms < r_min))
                r_min = low
            side = Side.INNER
        else:
            if r_in <= 0.0:
                return -1  # no query can hash inside this ball
            high = float(norms.max())
            if high > r_max:
                self.stats["side_violations"] += int(np.count_nonzero(norms > r_max))
                r_max = high
            r_min = min(r_min, r_in)
            side = Side.OUTER
        r_max = max(r_max, r_out)
        geom = ShellGeometry(newcen, r_min, r_in, r_out, r_max)
        p = self.params
        cs = process_captured(None, geom, side, self.k, p.eps, p.xi, p.delta, rng, ids=ids, data=self.data)
        return self.add_coreset(cs, node, -1)

    def far_structure(self, pts, ids, cen, rad, rng) -> int:
        far = preprocess_far(pts, cen, rad, 2.0 * rad, self.k, self.params, rng, ids=ids, data=self.data)
        f = self.far_cen.extend_array(far.cen[None, :])
        c = self.cols
        c["far_rmin"].append(far.r_min)
        c["far_rin"].append(far.r_in)
        c["far_base"].append(far.base_r)
        c["far_size"].append(far.size)
        c["far_rings"].append(len(far.rings))
        c["far_viol"].append(far.side_violations)
        pooled = (ids, self.pool.extend_array(ids))
        first = -1
        for cs in far.rings:
            j = self.add_coreset(cs, -1, f, pooled)
            first = j if first < 0 else first
        c["far_first"].append(first)
        self.stats["far_structures"] += 1
        self.stats["side_violations"] += far.side_violations
        return f

    def finish(self, extra: dict) -> FlatTree:
        arrays = {name: g.finish() for name, g in self.cols.items()}
        arrays["node_c"] = self.node_c.finish()
        arrays["far_cen"] = self.far_cen.finish()
        arrays["pool"] = self.pool.finish()
        self.stats.update(extra)
        return FlatTree(self.data, self.k, self.alpha, arrays, self.stats)


def preprocess(
    P,
    params: BuildParams,
    k: RadialKernel,
    rng=None,
    *,
    tree_index: int = 0,
) -> FlatTree:
    """Build one tree. Node ``i`` draws from ``default_rng([seed, tree_index, i])``.

    ``rng`` may be an integer that replaces ``params.seed``.
    """
    data = as_dataset(P)
    n, d = data.shape
    phi = resolve_phi(data, params)
    alpha = params.alpha_override if params.alpha_override is not None else alpha_for(n, phi, params.c1)
    cap = depth_cap(n, d, phi)
    seed = params.seed if rng is None else int(rng)
    B = _Builder(data, k, params, alpha)
    cols = B.cols
    st = B.stats

    # (parent, branch, ids, depth, parent_first_id, parent_rad)
    stack = [(-1, 0, np.arange(n, dtype=POOL_DTYPE), 0, -1, -1.0)]
    while stack:
        parent, branch, ids, depth, p_first, p_rad = stack.pop()
        if depth > cap:
            raise BuildError(
                f"tree depth exceeded cap {cap:.1f} (n={n}, d={d}, phi={phi:.4g}, node size={ids.size})"
            )
        i = cols["node_rad"].n
        node_rng = np.random.default_rng([seed, tree_index, i])
        pts = data[ids]
        first = int(ids[0])
        cen = data[first]
        rad = float(np.sqrt(np.max(np.sum((pts - cen) ** 2, axis=1))))
        cols["node_cen"].append(first)
        cols["node_rad"].append(rad)
        cols["node_size"].append(ids.size)
        cols["node_depth"].append(depth)
        cols["node_child"].append((-1, -1))
        if parent >= 0:
            cols["node_child"].set(parent, branch, i)
        st["nodes"] += 1
        st["max_depth"] = max(st["max_depth"], depth)
        if rad == 0.0:
            B.node_c.extend_array(np.zeros((1, d)))
            cols["node_r"].append(0.0)
            cols["node_ball"].append((-1, -1))
            cols["node_far"].append(-1)
            st["leaves"] += 1
            continue

        R = 2.0 * rad
        carve = sample_carving(R, alpha, d, node_rng)
        B.node_c.extend_array(carve.c[None, :])
        cols["node_r"].append(float(carve.r))
        newcen = cen + carve.c
        hv = hash_eval(carve, pts - cen)
        norms = np.sqrt(np.sum((pts - newcen) ** 2, axis=1))
        inside = hv == 0
        outside = hv == 1
        ball1 = B.cap_coreset(ids[inside], norms[inside], 1, i, R, newcen, carve, node_rng)
        ball0 = B.cap_coreset(ids[outside], norms[outside], 0, i, R, newcen, carve, node_rng)
        cols["node_ball"].append((ball0, ball1))

        if first == p_first and rad == p_rad:
            # Same ball as the parent: only queries inside it ever get here.
            cols["node_far"].append(-1)
            st["pass_through"] += 1
        else:
            cols["node_far"].append(B.far_structure(pts, ids, cen, rad, node_rng))

        pending = []
        for b, cap_mask in ((1, inside), (0, outside)):
            if b == 0 and carve.r - carve.half_width <= 0.0:
                continue  # nothing hashes inside this ball
            rest = ids[~cap_mask]
            if rest.size:
                pending.append((i, b, rest, depth + 1, first, rad))
        # Larger child last so it is built first; keeps the pending stack small.
        pending.sort(key=lambda item: item[2].size)
        stack.extend(pending)
    return B.finish({"phi": phi, "alpha": alpha, "depth_cap": cap})


def _fail(node: int, depth: int, visited: int, coresets: int, trace, reason: str) -> QueryResult:
    return QueryResult(
        None,
        FAIL,
        {
            "nodes_visited": visited,
            "coresets_touched": coresets,
            "fail_depth": depth,
            "fail_node": node,
            "reason": reason,
            "trace": trace,
        },
    )


def query(q, u, k: Optional[RadialKernel] = None, params: Optional[BuildParams] = None) -> QueryResult:
    """Sum one coreset estimate per node along the root-to-leaf path of ``q``.

    ``u`` is a FlatTree (query from its root) or a TreeNode view.
    """
    tree, i = (u.tree, u.index) if isinstance(u, TreeNode) else (u, 0)
    k = tree.kernel if k is None else k
    q = as_point(q, dim=tree.dim)
    total = 0.0
    trace = []
    coresets = 0
    visited = 0
    while i >= 0:
        visited += 1
        depth = int(tree.node_depth[i])
        rad = float(tree.node_rad[i])
        cen = tree.center(i)
        if rad == 0.0:
            val = int(tree.node_size[i]) * kernel_eval(k, q, cen)
            trace.append(("leaf", depth, val))
            total += val
            break
        dist = math.sqrt(float(np.sum((q - cen) ** 2)))
        if dist > 2.0 * rad:
            f = int(tree.node_far[i])
            if f < 0:
                raise StructuralError("reached a node without far-field data outside its ball")
            try:
                val = query_far(q, tree.far(f), k)
            except ContractError as exc:
                return _fail(i, depth, visited, coresets, trace, str(exc))
            trace.append(("far", depth, val))
            coresets += 1
            total += val
            break
        b = hash_eval(tree.carving(i), q - cen)
        if b == BOUNDARY:
            return _fail(i, depth, visited, coresets, trace, "boundary")
        j = int(tree.node_ball[i, b])
        if j >= 0:
            try:
                val = query_captured(tree.coreset(j), q)
            except ContractError as exc:
                return _fail(i, depth, visited, coresets, trace, str(exc))
            trace.append(("coreset", depth, val))
            coresets += 1
            total += val
        i = int(tree.node_child[i, b])
    stats = {"nodes_visited": visited, "coresets_touched": coresets, "fail_depth": None, "trace": trace}
    return QueryResult(total, OK, stats)


def query_forest(q, trees, k: Optional[RadialKernel] = None, params: Optional[BuildParams] = None) -> QueryResult:
    """First successful answer over independently built trees."""
    if not trees:
        raise StructuralError("query_forest needs at least one tree")
    result = None
    for t, tree in enumerate(trees):
        result = query(q, tree, k, params)
        result.stats["tree"] = t
        if result.ok:
            return result
    return result


class Forest:
    """Independent trees over one dataset, plus the build statistics."""

    def __init__(self, data: np.ndarray, kernel: RadialKernel, params: BuildParams, trees, stats: dict):
        self.data = data
        self.kernel = kernel
        self.params = params
        self.trees = list(trees)
        self.stats = stats

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def query(self, q) -> QueryResult:
        return query_forest(q, self.trees, self.kernel, self.params)


def summarize(n: int, d: int, params: BuildParams, per_tree: list, seconds: float) -> dict:
    return {
        "n": n,
        "d": d,
        "trees": len(per_tree),
        "nodes": sum(s["nodes"] for s in per_tree),
        "max_depth": max(s["max_depth"] for s in per_tree),
        "coresets": sum(s["coresets"] for s in per_tree),
        "coreset_points": sum(s["coreset_points"] for s in per_tree),
        "halved_coresets": sum(s["halved_coresets"] for s in per_tree),
        "side_violations": sum(s["side_violations"] for s in per_tree),
        "size_bound_violations": sum(s["size_bound_violations"] for s in per_tree),
        "max_size_ratio": max(s["max_size_ratio"] for s in per_tree),
        "phi": params.phi,
        "alpha": per_tree[0]["alpha"],
        "build_seconds": seconds,
    }


def build_forest(P, k: RadialKernel, params: BuildParams) -> Forest:
    data = as_dataset(P)
    if params.phi is None:
        params = replace(params, phi=resolve_phi(data, params))
    start = time.perf_counter()
    trees = [preprocess(data, params, k, tree_index=t) for t in range(params.num_trees)]
    stats = summarize(data.shape[0], data.shape[1], params, [t.stats for t in trees], time.perf_counter() - start)
    return Forest(data, k, params, trees, stats)
