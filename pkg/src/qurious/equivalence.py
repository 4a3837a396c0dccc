"""Equivalent-question discovery: candidate pairs, similarity graph,
greedy-modularity clustering.

Clustering is the classic agglomerative greedy: start from singleton
communities and keep applying the merge with the largest modularity gain
while one exists. Ties break on the lexicographically smallest community
id pair, so partitions are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import Question
from .embedding import EmbeddingMatrix

_CHUNK = 1024


@dataclass(frozen=True)
class CandidatePair:
    qid1: str
    qid2: str
    score: float
    label: Optional[int] = None

    def __post_init__(self) -> None:
        if self.qid1 >= self.qid2:
            raise ValueError("pairs must be ordered qid1 < qid2")


@dataclass
class Graph:
    """Simple undirected graph over string node ids."""

    nodes: list[str] = field(default_factory=list)
    adj: dict[str, set[str]] = field(default_factory=dict)

    def add_node(self, node: str) -> None:
        if node not in self.adj:
            self.nodes.append(node)
            self.adj[node] = set()

    def add_edge(self, a: str, b: str) -> None:
        if a == b:
            return
        self.add_node(a)
        self.add_node(b)
        self.adj[a].add(b)
        self.adj[b].add(a)

    @property
    def edge_count(self) -> int:
        return sum(len(nbrs) for nbrs in self.adj.values()) // 2

    def degree(self, node: str) -> int:
        return len(self.adj[node])

    def edges(self) -> Iterable[tuple[str, str]]:
        for a in self.nodes:
            for b in self.adj[a]:
                if a < b:
                    yield a, b


@dataclass
class CommunityPartition:
    assignment: dict[str, int]
    community_count: int
    singleton_count: int
    modularity: float


def candidate_pairs(matrix: EmbeddingMatrix, topn: int = 10) -> list[CandidatePair]:
    """Each row's topn nearest neighbors as unordered pairs.

    Mirror duplicates collapse to one pair; output is sorted by score
    descending, then by id pair.
    """
    if matrix.count == 0:
        raise ValueError("empty matrix")
    if topn < 1:
        raise ValueError("topn must be >= 1")
    n = matrix.count
    take = min(topn, n - 1)
    best: dict[tuple[str, str], float] = {}
    if take == 0:
        return []
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        sims = matrix.data[start:stop] @ matrix.data.T
        for local in range(stop - start):
            i = start + local
            row = sims[local]
            row[i] = -np.inf  # exclude self
            idx = np.argpartition(row, n - take)[n - take:]
            ranked = sorted(idx, key=lambda j: (-row[j], matrix.ids[j]))[:take]
            for j in ranked:
                a, b = matrix.ids[i], matrix.ids[j]
                key = (a, b) if a < b else (b, a)
                if key not in best:
                    best[key] = float(row[j])
    pairs = [CandidatePair(qid1=a, qid2=b, score=s) for (a, b), s in best.items()]
    pairs.sort(key=lambda p: (-p.score, p.qid1, p.qid2))
    return pairs


def build_similarity_graph(matrix: EmbeddingMatrix, tau: float) -> Graph:
    """Graph over all row ids with an edge where cosine >= tau."""
    if not (0.0 < tau <= 1.0):
        raise ValueError("tau must lie in (0, 1]")
    graph = Graph()
    for qid in matrix.ids:
        graph.add_node(qid)
    n = matrix.count
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        sims = matrix.data[start:stop] @ matrix.data.T
        for local in range(stop - start):
            i = start + local
            for j in np.flatnonzero(sims[local] >= tau):
                if j > i:
                    graph.add_edge(matrix.ids[i], matrix.ids[int(j)])
    return graph


def modularity(graph: Graph, assignment: dict[str, int]) -> float:
    """Q = sum_c (e_c/m - (d_c/2m)^2); 0 for an empty edge set."""
    missing = [node for node in graph.nodes if node not in assignment]
    if missing:
        raise ValueError(f"partition misses nodes {missing[:5]}")
    m = graph.edge_count
    if m == 0:
        return 0.0
    intra: dict[int, int] = {}
    deg: dict[int, int] = {}
    for node in graph.nodes:
        c = assignment[node]
        deg[c] = deg.get(c, 0) + graph.degree(node)
    for a, b in graph.edges():
        if assignment[a] == assignment[b]:
            c = assignment[a]
            intra[c] = intra.get(c, 0) + 1
    q = 0.0
    for c, d in deg.items():
        q += intra.get(c, 0) / m - (d / (2.0 * m)) ** 2
    return q


def detect_communities(graph: Graph) -> CommunityPartition:
    """Greedy modularity-gain merging from singletons.

    Merging communities a, b changes Q by e_ab/m - d_a*d_b/(2 m^2), which
    is positive only for connected pairs, so only those are scanned.
    Isolated nodes stay singletons. Final community ids are integers in
    order of each community's smallest member id.
    """
    m = graph.edge_count
    members: dict[str, set[str]] = {node: {node} for node in graph.nodes}

    if m > 0:
        # community key = smallest member id; adjacency weights count
        # inter-community edges
        degree = {node: graph.degree(node) for node in graph.nodes}
        links: dict[str, dict[str, int]] = {
            node: {nbr: 1 for nbr in graph.adj[node]} for node in graph.nodes
        }
        two_m2 = 2.0 * m * m

        while True:
            # scan connected pairs in ascending id order so that equal
            # gains resolve to the smallest pair
            best_gain = 0.0
            best_pair: Optional[tuple[str, str]] = None
            for a in sorted(links):
                for b in sorted(links[a]):
                    if b <= a:
                        continue
                    gain = links[a][b] / m - degree[a] * degree[b] / two_m2
                    if gain > best_gain:
                        best_gain = gain
                        best_pair = (a, b)
            if best_pair is None:
                break
            a, b = best_pair
            members[a] |= members.pop(b)
            degree[a] += degree.pop(b)
            b_links = links.pop(b)
            for other, w in b_links.items():
                if other == a:
                    continue
                links[other].pop(b, None)
                links[a][other] = links[a].get(other, 0) + w
                links[other][a] = links[a][other]
            links[a].pop(b, None)
            links[a].pop(a, None)

    communities = sorted(members.values(), key=lambda group: min(group))
    assignment = {node: idx for idx, group in enumerate(communities) for node in group}
    return CommunityPartition(
        assignment=assignment,
        community_count=len(communities),
        singleton_count=sum(1 for group in communities if len(group) == 1),
        modularity=modularity(graph, assignment),
    )


def pairs_to_csv(pairs: Sequence[CandidatePair], questions: Optional[Sequence[Question]] = None) -> str:
    """CSV with id, text, score and an empty label column for annotation."""
    texts = {q.id: q.norm_text for q in questions} if questions else {}

    def esc(value: str) -> str:
        if any(ch in value for ch in ',"\n'):
            return '"' + value.replace('"', '""') + '"'
        return value

    lines = ["qid1,question1,qid2,question2,score,label"]
    for p in pairs:
        label = "" if p.label is None else str(p.label)
        lines.append(
            f"{esc(p.qid1)},{esc(texts.get(p.qid1, ''))},{esc(p.qid2)},"
            f"{esc(texts.get(p.qid2, ''))},{p.score!r},{label}"
        )
    return "\n".join(lines) + "\n"


def pairs_from_csv(text: str) -> list[CandidatePair]:
    import csv
    import io

    reader = csv.DictReader(io.StringIO(text))
    pairs = []
    for row in reader:
        label = row.get("label", "")
        pairs.append(CandidatePair(
            qid1=row["qid1"],
            qid2=row["qid2"],
            score=float(row["score"]),
            label=int(label) if label not in ("", None) else None,
        ))
    return pairs


def partition_to_jsonl(partition: CommunityPartition) -> str:
    lines = []
    for node in sorted(partition.assignment):
        lines.append(json.dumps({"id": node, "community": partition.assignment[node]}))
    return "\n".join(lines) + "\n"
