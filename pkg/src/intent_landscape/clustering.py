"""Two-level clustering: HDBSCAN over cosine distance, then average link.

Both algorithms are implemented here rather than imported, because the
exact tie rules and the cut rule are part of the artifact contract (the
review UI recuts the dendrogram client-side and must agree bit-exactly).

HDBSCAN pipeline, in order:
  1. core distance of p = distance to its min_samples-th nearest
     neighbor, counting p itself as neighbor 1;
  2. mutual reachability d_mr(a,b) = max(core(a), core(b), d_cos(a,b));
  3. dense Prim minimum spanning tree over d_mr;
  4. single-linkage tree via union-find over MST edges sorted by
     (distance, smaller endpoint, larger endpoint);
  5. condensed tree with min_cluster_size, lambda = 1/distance
     (+inf at distance 0);
  6. cluster extraction by stability under excess-of-mass or leaf
     selection. The root cluster is eligible for selection, so a corpus
     of identical points yields one cluster rather than all noise.

Average link uses the Lance-Williams recurrence on the cosine-distance
matrix between low-level centers; merge ties go to the smallest
(node_a, node_b) pair under the current numbering.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

NOISE = -1

SELECTION_EOM = "excess_of_mass"
SELECTION_LEAF = "leaf"


@dataclass(frozen=True)
class DensityParams:
    min_cluster_size: int = 2
    min_samples: int | None = None
    selection: str = SELECTION_EOM

    def __post_init__(self) -> None:
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples is not None and self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.selection not in (SELECTION_EOM, SELECTION_LEAF):
            raise ValueError(f"unknown selection rule {self.selection!r}")

    @property
    def effective_min_samples(self) -> int:
        return self.min_samples if self.min_samples is not None else self.min_cluster_size


@dataclass
class ClusterInfo:
    id: int
    members: tuple[int, ...]
    center: np.ndarray | None = None


@dataclass
class LowLevelClustering:
    labels: list[int]
    clusters: list[ClusterInfo] = field(default_factory=list)


@dataclass(frozen=True)
class Dendrogram:
    merges: tuple[tuple[int, int, float, int], ...]
    leaf_count: int

    def __post_init__(self) -> None:
        if self.leaf_count < 0:
            raise ValueError("dendrogram leaf count must be >= 0")
        expected = max(self.leaf_count - 1, 0)
        if len(self.merges) != expected:
            raise ValueError(
                f"{self.leaf_count} leaves need {expected} merges, "
                f"got {len(self.merges)}"
            )


def cosine_distance_matrix(points: np.ndarray) -> np.ndarray:
    """Dense pairwise cosine distances, clamped at 0, zero diagonal."""
    norms = np.linalg.norm(points, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero vector in distance matrix input")
    unit = points / norms[:, None]
    d = 1.0 - unit @ unit.T
    np.clip(d, 0.0, 2.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    # Row-wise sort includes the zero self-distance, so the point itself
    # is neighbor 1 and the k-th neighbor sits at index k-1.
    return np.sort(dist, axis=1)[:, min_samples - 1]


def _mutual_reachability(dist: np.ndarray, core: np.ndarray) -> np.ndarray:
    return np.maximum(dist, np.maximum(core[:, None], core[None, :]))


def _prim_mst(mr: np.ndarray) -> list[tuple[int, int, float]]:
    n = mr.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    source = np.zeros(n, dtype=np.intp)
    in_tree[0] = True
    best[:] = mr[0]
    best[0] = np.inf
    edges: list[tuple[int, int, float]] = []
    for _ in range(n - 1):
        j = int(np.argmin(best))
        edges.append((int(source[j]), j, float(best[j])))
        in_tree[j] = True
        best[j] = np.inf
        closer = mr[j] < best
        closer &= ~in_tree
        best[closer] = mr[j][closer]
        source[closer] = j
    return edges


class _UnionFind:
    """Union-find that assigns a fresh node id to every union (single linkage)."""

    def __init__(self, n: int) -> None:
        self.parent = list(range(2 * n - 1)) if n > 1 else [0]
        self.size = [1] * n + [0] * max(0, n - 1)
        self.next_id = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        node = self.next_id
        self.next_id += 1
        self.parent[a] = node
        self.parent[b] = node
        self.size[node] = self.size[a] + self.size[b]
        return node


def _single_linkage_tree(
    edges: list[tuple[int, int, float]], n: int
) -> list[tuple[int, int, float, int]]:
    """Rows (left, right, distance, size); new nodes numbered n, n+1, ..."""
    ordered = sorted(edges, key=lambda e: (e[2], min(e[0], e[1]), max(e[0], e[1])))
    uf = _UnionFind(n)
    rows: list[tuple[int, int, float, int]] = []
    for a, b, dist in ordered:
        ra, rb = uf.find(a), uf.find(b)
        node = uf.union(ra, rb)
        rows.append((min(ra, rb), max(ra, rb), dist, uf.size[node]))
    return rows


def _condense_tree(
    linkage: list[tuple[int, int, float, int]], n: int, min_cluster_size: int
) -> list[tuple[int, int, float, int]]:
    """Rows (parent, child, lambda, size); cluster ids start at n.

    A child below min_cluster_size dissolves into its points, which
    leave the parent cluster at the split's lambda.
    """
    if n == 1:
        return []
    node_children = {n + i: (row[0], row[1]) for i, row in enumerate(linkage)}
    node_dist = {n + i: row[2] for i, row in enumerate(linkage)}
    node_size = {n + i: row[3] for i, row in enumerate(linkage)}

    def subtree_points(node: int) -> list[int]:
        out: list[int] = []
        stack = [node]
        while stack:
            cur = stack.pop()
            if cur < n:
                out.append(cur)
            else:
                stack.extend(node_children[cur])
        return out

    def count(node: int) -> int:
        return 1 if node < n else node_size[node]

    root = n + len(linkage) - 1
    relabel = {root: n}
    next_label = n + 1
    rows: list[tuple[int, int, float, int]] = []
    stack = [root]
    while stack:
        node = stack.pop(0)
        left, right = node_children[node]
        dist = node_dist[node]
        lam = (1.0 / dist) if dist > 0.0 else math.inf
        cluster = relabel[node]
        big_left = count(left) >= min_cluster_size
        big_right = count(right) >= min_cluster_size
        if big_left and big_right:
            for child in (left, right):
                relabel[child] = next_label
                next_label += 1
                rows.append((cluster, relabel[child], lam, count(child)))
                if child >= n:
                    stack.append(child)
                else:
                    # a bare point was promoted to a cluster label; it can
                    # only happen with min_cluster_size 1, which params forbid
                    raise AssertionError("point promoted to cluster")
        elif not big_left and not big_right:
            for child in (left, right):
                for p in subtree_points(child):
                    rows.append((cluster, p, lam, 1))
        else:
            small, big = (left, right) if big_right else (right, left)
            for p in subtree_points(small):
                rows.append((cluster, p, lam, 1))
            relabel[big] = cluster
            if big >= n:
                stack.append(big)
            else:
                rows.append((cluster, big, lam, 1))
        # Points that dissolve keep their subtrees out of the walk because
        # only relabeled internal nodes are pushed.
    return rows


def _stability(
    condensed: list[tuple[int, int, float, int]], n: int
) -> dict[int, float]:
    births: dict[int, float] = {}
    for parent, child, lam, _size in condensed:
        if child >= n:
            births[child] = lam
    cluster_ids = {parent for parent, _, _, _ in condensed}
    births.setdefault(min(cluster_ids, default=n), 0.0)
    for cid in cluster_ids:
        births.setdefault(cid, 0.0)
    stability = {cid: 0.0 for cid in cluster_ids}
    for parent, _child, lam, size in condensed:
        birth = births[parent]
        if math.isinf(lam) and math.isinf(birth):
            continue
        stability[parent] += (lam - birth) * size
    return stability


def _select_clusters(
    condensed: list[tuple[int, int, float, int]], n: int, selection: str
) -> set[int]:
    cluster_ids = sorted({parent for parent, _, _, _ in condensed})
    if not cluster_ids:
        return set()
    children: dict[int, list[int]] = {cid: [] for cid in cluster_ids}
    for parent, child, _lam, _size in condensed:
        if child >= n:
            children[parent].append(child)

    if selection == SELECTION_LEAF:
        return {cid for cid in cluster_ids if not children[cid]}

    stability = _stability(condensed, n)
    subtree = dict(stability)
    selected = {cid: False for cid in cluster_ids}
    for cid in sorted(cluster_ids, reverse=True):
        kids = children[cid]
        if not kids:
            selected[cid] = True
            continue
        child_sum = sum(subtree[k] for k in kids)
        if stability[cid] >= child_sum:
            selected[cid] = True
            # Screen out every selected descendant.
            stack = list(kids)
            while stack:
                k = stack.pop()
                selected[k] = False
                stack.extend(children[k])
            subtree[cid] = stability[cid]
        else:
            subtree[cid] = child_sum
    return {cid for cid, flag in selected.items() if flag}


def _label_points(
    condensed: list[tuple[int, int, float, int]], n: int, selected: set[int]
) -> list[int]:
    point_parent: dict[int, int] = {}
    cluster_parent: dict[int, int] = {}
    for parent, child, _lam, _size in condensed:
        if child < n:
            point_parent[child] = parent
        else:
            cluster_parent[child] = parent
    raw = [NOISE] * n
    for p in range(n):
        cur = point_parent.get(p)
        while cur is not None:
            if cur in selected:
                raw[p] = cur
                break
            cur = cluster_parent.get(cur)
    # Renumber selected clusters by their smallest member point index.
    first_member: dict[int, int] = {}
    for p, lab in enumerate(raw):
        if lab != NOISE and lab not in first_member:
            first_member[lab] = p
    order = sorted(first_member, key=lambda c: first_member[c])
    remap = {c: i for i, c in enumerate(order)}
    return [remap[lab] if lab != NOISE else NOISE for lab in raw]


def hdbscan(points: Sequence[np.ndarray] | np.ndarray, params: DensityParams) -> LowLevelClustering:
    """Density clustering of unit vectors over cosine distance."""
    matrix = np.asarray(points, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"points must form a 2-D array, got shape {matrix.shape}")
    if np.any(~np.isfinite(matrix)):
        raise ValueError("non-finite value in clustering input")
    n = matrix.shape[0]
    if n < 1:
        raise ValueError("need at least one point")
    if n < params.min_cluster_size:
        logger.warning(
            "only %d points for min_cluster_size %d, everything is noise",
            n,
            params.min_cluster_size,
        )
        return _with_clusters([NOISE] * n)
    min_samples = min(params.effective_min_samples, n)

    dist = cosine_distance_matrix(matrix)
    core = _core_distances(dist, min_samples)
    mr = _mutual_reachability(dist, core)
    mst_edges = _prim_mst(mr)
    linkage = _single_linkage_tree(mst_edges, n)
    condensed = _condense_tree(linkage, n, params.min_cluster_size)
    selected = _select_clusters(condensed, n, params.selection)
    labels = _label_points(condensed, n, selected)
    return _with_clusters(labels)


def _with_clusters(labels: list[int]) -> LowLevelClustering:
    members: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        if lab != NOISE:
            members.setdefault(lab, []).append(i)
    clusters = [ClusterInfo(id=cid, members=tuple(members[cid])) for cid in sorted(members)]
    return LowLevelClustering(labels=labels, clusters=clusters)


def compute_centers(
    clustering: LowLevelClustering, points: Sequence[np.ndarray] | np.ndarray
) -> LowLevelClustering:
    """Fill each cluster's center with the plain mean of its member vectors."""
    matrix = np.asarray(points, dtype=np.float64)
    for cluster in clustering.clusters:
        cluster.center = matrix[list(cluster.members)].mean(axis=0)
    return clustering


def average_link(centers: Sequence[np.ndarray] | np.ndarray) -> Dendrogram:
    """Average-link agglomeration of centers under cosine distance."""
    matrix = np.asarray(centers, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"centers must form a 2-D array, got shape {matrix.shape}")
    c = matrix.shape[0]
    if c < 1:
        raise ValueError("need at least one center")
    if c == 1:
        return Dendrogram(merges=(), leaf_count=1)

    dist = cosine_distance_matrix(matrix)
    # Active nodes and their pairwise distances under Lance-Williams.
    active: dict[int, int] = {i: 1 for i in range(c)}  # node id -> member count
    d: dict[tuple[int, int], float] = {}
    for i in range(c):
        for j in range(i + 1, c):
            d[(i, j)] = float(dist[i, j])
    merges: list[tuple[int, int, float, int]] = []
    next_id = c
    while len(active) > 1:
        best: tuple[float, int, int] | None = None
        for (a, b), dab in d.items():
            key = (dab, a, b)
            if best is None or key < best:
                best = key
        assert best is not None
        dab, a, b = best
        size = active[a] + active[b]
        merges.append((a, b, dab, size))
        # Lance-Williams average-link update against every other node.
        na, nb = active[a], active[b]
        del active[a], active[b]
        new_d: dict[int, float] = {}
        for k in active:
            dka = d.pop((min(a, k), max(a, k)))
            dkb = d.pop((min(b, k), max(b, k)))
            new_d[k] = (na * dka + nb * dkb) / (na + nb)
        d.pop((a, b))
        active[next_id] = size
        for k, val in new_d.items():
            d[(min(k, next_id), max(k, next_id))] = val
        next_id += 1
    return Dendrogram(merges=tuple(merges), leaf_count=c)


def cut_dendrogram(dend: Dendrogram, distance_threshold: float) -> list[int]:
    """Per-leaf top-level labels after merging while distance < threshold.

    Components are numbered by their smallest contained leaf id.
    """
    if distance_threshold <= 0:
        raise ValueError("distance_threshold must be > 0")
    c = dend.leaf_count
    parent = list(range(2 * c - 1)) if c > 1 else [0]

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    next_id = c
    for a, b, dist, _size in dend.merges:
        if dist >= distance_threshold:
            break
        parent[find(a)] = next_id
        parent[find(b)] = next_id
        next_id += 1
    roots: dict[int, int] = {}
    labels = []
    for leaf in range(c):
        root = find(leaf)
        if root not in roots:
            roots[root] = len(roots)
        labels.append(roots[root])
    return labels


def write_clusters(
    path: str | Path,
    clustering: LowLevelClustering,
    refs: Sequence[tuple[str, int]],
) -> None:
    """clusters.json: per-point labels, member refs, centers."""
    if len(refs) != len(clustering.labels):
        raise ValueError(f"{len(refs)} refs for {len(clustering.labels)} labels")
    payload = {
        "labels": clustering.labels,
        "clusters": [
            {
                "id": cl.id,
                "members": [
                    {"dialogue_id": refs[i][0], "rank": refs[i][1]} for i in cl.members
                ],
                "center": [float(x) for x in cl.center]
                if cl.center is not None
                else None,
            }
            for cl in clustering.clusters
        ],
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def read_clusters(path: str | Path) -> LowLevelClustering:
    """Read clusters.json; member indexes are rebuilt from the labels array.

    Row order (and hence span refs) is owned by the vector file; the
    member ref lists here are for human inspection and are only checked
    for cardinality.
    """
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    labels = [int(x) for x in obj["labels"]]
    positions: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        if lab != NOISE:
            positions.setdefault(lab, []).append(i)
    clusters = []
    for cl in obj["clusters"]:
        cid = int(cl["id"])
        member_indexes = positions.get(cid, [])
        if len(member_indexes) != len(cl["members"]):
            raise ValueError(f"cluster {cid}: member list does not match labels")
        center = cl.get("center")
        clusters.append(
            ClusterInfo(
                id=cid,
                members=tuple(member_indexes),
                center=np.asarray(center, dtype=np.float64) if center is not None else None,
            )
        )
    return LowLevelClustering(
        labels=labels, clusters=sorted(clusters, key=lambda cl: cl.id)
    )


def write_dendrogram(path: str | Path, dend: Dendrogram) -> None:
    payload = {
        "leaf_count": dend.leaf_count,
        "merges": [[a, b, dist, size] for a, b, dist, size in dend.merges],
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def read_dendrogram(path: str | Path) -> Dendrogram:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    merges = tuple(
        (int(a), int(b), float(dist), int(size)) for a, b, dist, size in obj["merges"]
    )
    return Dendrogram(merges=merges, leaf_count=int(obj["leaf_count"]))
