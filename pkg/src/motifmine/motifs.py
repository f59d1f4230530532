"""Daily mobility networks, canonical signatures, and the motif census.

A user-day becomes a directed graph whose walk starts and ends at the home
parcel (constraint I); every node on a closed walk automatically has at
least one incoming and one outgoing edge (constraint II). Two comparison
regimes exist: location-based (LBM), where only structure and the pinned
home node matter, and activity-based (ABM), where node labels must be
preserved. Canonical signatures are permutation-minimal adjacency
encodings, so signature equality is exactly isomorphism under the regime's
admissible mappings.
"""

import itertools
from dataclasses import dataclass

from .annotate import HomeAssignment, UserDay

LBM = "lbm"
ABM = "abm"

HOME_LABEL = "H"

# activity code -> node label; codes 7 and 8 share the civic-service label
ACTIVITY_LABELS = {
    1: "R",
    2: "Ho",
    3: "U",
    4: "S",
    5: "C",
    6: "W",
    7: "Se",
    8: "Se",
    9: "Sh",
    10: "E",
    11: "T",
    12: "O",
}

# pseudo-location for points with no parcel context; one node per day
UNKNOWN_PARCEL = -1

SIGNATURE_NODE_CAP = 12


@dataclass(slots=True)
class DailyNetwork:
    kind: str
    user_id: str
    local_date: object
    node_keys: tuple  # parcel ids (LBM) or labels (ABM view)
    labels: tuple
    edges: frozenset  # ordered (i, j) node-index pairs, no self-loops
    walk: tuple  # chronological node-index sequence, starts/ends at home
    home_index: int = 0

    @property
    def node_count(self) -> int:
        return len(self.node_keys)


@dataclass(slots=True)
class CanonicalSignature:
    kind: str
    node_count: int
    signature_string: str


def collapse_visits(points) -> list:
    """Collapse consecutive points on the same parcel into visits.

    Returns [(parcel_key, [points])] where unanchored points share the
    UNKNOWN_PARCEL pseudo-location.
    """
    visits = []
    for p in points:
        key = p.parcel_id if p.parcel_id is not None else UNKNOWN_PARCEL
        if visits and visits[-1][0] == key:
            visits[-1][1].append(p)
        else:
            visits.append((key, [p]))
    return visits


def label_for(parcel_key: int, activity_code: int, home_parcel_id: int) -> str:
    if parcel_key == home_parcel_id:
        return HOME_LABEL
    return ACTIVITY_LABELS[activity_code]


def build_daily_network(day: UserDay, home: HomeAssignment):
    """Build the day's directed network, or reject it with a reason.

    Returns (DailyNetwork, None) on success, (None, reason) otherwise with
    reason in {"no_home", "open_walk"}. A day spent entirely at home yields
    the one-node network.
    """
    if home is None or home.home_parcel_id is None:
        return None, "no_home"
    visits = collapse_visits(day.points)
    home_key = home.home_parcel_id
    if visits[0][0] != home_key or visits[-1][0] != home_key:
        return None, "open_walk"

    node_index: dict[int, int] = {}
    labels = []
    walk = []
    for key, pts in visits:
        if key not in node_index:
            node_index[key] = len(node_index)
            labels.append(label_for(key, pts[0].activity_code, home_key))
        walk.append(node_index[key])
    edges = frozenset(zip(walk, walk[1:]))

    n = len(node_index)
    if n > 1:
        indeg = [0] * n
        outdeg = [0] * n
        for u, v in edges:
            outdeg[u] += 1
            indeg[v] += 1
        assert all(indeg[i] >= 1 and outdeg[i] >= 1 for i in range(n)), (
            "closed walk produced a node without both edge directions"
        )

    keys = tuple(sorted(node_index, key=node_index.get))
    return (
        DailyNetwork(LBM, day.user_id, day.local_date, keys, tuple(labels), edges, tuple(walk)),
        None,
    )


def abm_reduce(net: DailyNetwork) -> DailyNetwork:
    """Merge same-activity nodes while preserving the transition order.

    The walk is re-read as a label sequence, consecutive repeats collapse,
    and the graph is rebuilt; self-loops created by merging disappear in
    the collapse. Idempotent, never increases the node count.
    """
    label_walk = [net.labels[i] for i in net.walk]
    collapsed = [label_walk[0]]
    for lab in label_walk[1:]:
        if lab != collapsed[-1]:
            collapsed.append(lab)
    node_index: dict[str, int] = {}
    walk = []
    for lab in collapsed:
        if lab not in node_index:
            node_index[lab] = len(node_index)
        walk.append(node_index[lab])
    labels = tuple(sorted(node_index, key=node_index.get))
    edges = frozenset(zip(walk, walk[1:]))
    return DailyNetwork(ABM, net.user_id, net.local_date, labels, labels, edges, tuple(walk))


def _permutation_groups(node_count: int, labels, pin_home: bool):
    """Index groups within which nodes are interchangeable for canonization."""
    fixed = [0] if pin_home else []
    free = [i for i in range(node_count) if not (pin_home and i == 0)]
    if labels is None:
        groups = [free] if free else []
    else:
        by_label: dict[str, list] = {}
        for i in free:
            by_label.setdefault(labels[i], []).append(i)
        groups = [by_label[lab] for lab in sorted(by_label)]
    return fixed, groups


def graph_signature(node_count: int, edges, labels=None, pin_home: bool = True) -> str:
    """Permutation-minimal encoding of a home-pinned directed graph.

    The adjacency matrix is emitted row-major as a bit string under every
    admissible node ordering (home first when pinned; label-sorted groups
    when labels are given) and the lexicographically smallest wins. Equal
    strings correspond exactly to isomorphic graphs under the same regime.
    """
    if node_count > SIGNATURE_NODE_CAP:
        raise ValueError(f"node count {node_count} above signature cap {SIGNATURE_NODE_CAP}")
    if node_count < 1:
        raise ValueError("empty graph")
    edges = set(edges)
    fixed, groups = _permutation_groups(node_count, labels, pin_home)
    if labels is None:
        labelseq = ""
    else:
        labelseq = ",".join([labels[i] for i in fixed] + [labels[g[0]] for g in groups for _ in g])

    best = None
    for perm_combo in itertools.product(*(itertools.permutations(g) for g in groups)):
        order = fixed + [i for grp in perm_combo for i in grp]
        bits = "".join(
            "1" if (order[r], order[c]) in edges else "0"
            for r in range(node_count)
            for c in range(node_count)
        )
        if best is None or bits < best:
            best = bits
    return f"{node_count}|{labelseq}|{best}"


def decode_signature(sig: str):
    """Signature string back to (node_count, edges, labels-or-None)."""
    n_str, labelseq, bits = sig.split("|")
    n = int(n_str)
    labels = tuple(labelseq.split(",")) if labelseq else None
    edges = {
        (r, c) for r in range(n) for c in range(n) if bits[r * n + c] == "1"
    }
    return n, edges, labels


def canonical_signature(net: DailyNetwork, kind: str | None = None,
                        pin_home: bool = True) -> CanonicalSignature:
    kind = kind or net.kind
    labels = net.labels if kind == ABM else None
    sig = graph_signature(net.node_count, net.edges, labels, pin_home)
    return CanonicalSignature(kind, net.node_count, sig)


def _degree_profile(n, edges, labels):
    indeg = [0] * n
    outdeg = [0] * n
    for u, v in edges:
        outdeg[u] += 1
        indeg[v] += 1
    labs = labels if labels is not None else [""] * n
    return indeg, outdeg, labs


def graphs_isomorphic(n1, edges1, n2, edges2, labels1=None, labels2=None,
                      pin_home: bool = True) -> bool:
    """Refinement-based matcher for home-pinned digraph isomorphism.

    Candidate pairs are pruned by label and exact in/out degree before a
    backtracking extension checks edge consistency against the partial
    mapping in both directions, mirroring the classic matcher strategy for
    directed graphs.
    """
    e1, e2 = set(edges1), set(edges2)
    if n1 != n2 or len(e1) != len(e2):
        return False
    in1, out1, lab1 = _degree_profile(n1, e1, labels1)
    in2, out2, lab2 = _degree_profile(n2, e2, labels2)
    if sorted(zip(lab1, in1, out1)) != sorted(zip(lab2, in2, out2)):
        return False
    if pin_home and (lab1[0], in1[0], out1[0]) != (lab2[0], in2[0], out2[0]):
        return False

    # visit order: breadth-first over the underlying adjacency for locality
    neighbors = [set() for _ in range(n1)]
    for u, v in e1:
        neighbors[u].add(v)
        neighbors[v].add(u)
    order = []
    seen = set()
    queue = [0] if pin_home else []
    for start in queue + [i for i in range(n1)]:
        if start in seen:
            continue
        stack = [start]
        seen.add(start)
        while stack:
            node = stack.pop(0)
            order.append(node)
            for nb in sorted(neighbors[node]):
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)

    mapping: dict[int, int] = {}
    used = set()
    if pin_home:
        mapping[0] = 0
        used.add(0)

    def extend(k: int) -> bool:
        if k == n1:
            return True
        u = order[k]
        if u in mapping:
            return extend(k + 1)
        for v in range(n2):
            if v in used or lab1[u] != lab2[v]:
                continue
            if in1[u] != in2[v] or out1[u] != out2[v]:
                continue
            consistent = True
            for w, mw in mapping.items():
                if ((u, w) in e1) != ((v, mw) in e2) or ((w, u) in e1) != ((mw, v) in e2):
                    consistent = False
                    break
            if consistent:
                mapping[u] = v
                used.add(v)
                if extend(k + 1):
                    return True
                del mapping[u]
                used.remove(v)
        return False

    return extend(0)


def isomorphic(g1: DailyNetwork, g2: DailyNetwork, kind: str | None = None,
               pin_home: bool = True) -> bool:
    """True when a home-pinning (and for ABM label-preserving) bijection
    maps edges onto edges exactly. Agrees with signature equality."""
    kind = kind or g1.kind
    labels1 = g1.labels if kind == ABM else None
    labels2 = g2.labels if kind == ABM else None
    return graphs_isomorphic(
        g1.node_count, g1.edges, g2.node_count, g2.edges, labels1, labels2, pin_home
    )


def size_group_label(node_count: int, max_nodes: int = 6) -> str:
    if node_count <= max_nodes:
        return str(node_count)
    return f"{max_nodes + 1}+"


@dataclass(slots=True)
class MotifEntry:
    rank: int
    signature: str
    node_count: int
    count: int
    percentage: float


@dataclass(slots=True)
class MotifCensus:
    kind: str
    total: int
    one_node_count: int
    cutoff: float
    max_nodes: int
    signature_counts: dict
    motifs: list
    size_groups: dict  # label -> count

    def size_group_percentages(self) -> dict:
        if not self.total:
            return {k: 0.0 for k in self.size_groups}
        return {k: 100.0 * v / self.total for k, v in self.size_groups.items()}


def census_from_signatures(items, kind: str, cutoff: float = 0.005,
                           max_nodes: int = 6) -> MotifCensus:
    """Census over (node_count, signature) pairs; signature may be None for
    networks larger than max_nodes (they only join the size tally)."""
    total = len(items)
    one_node = 0
    sig_counts: dict[str, int] = {}
    sig_nodes: dict[str, int] = {}
    size_groups = {str(n): 0 for n in range(1, max_nodes + 1)}
    size_groups[f"{max_nodes + 1}+"] = 0
    for n, sig in items:
        size_groups[size_group_label(n, max_nodes)] += 1
        if n == 1:
            one_node += 1
        elif n <= max_nodes:
            sig_counts[sig] = sig_counts.get(sig, 0) + 1
            sig_nodes[sig] = n
    motifs = []
    if total:
        qualifying = [
            (sig, c) for sig, c in sig_counts.items() if c / total > cutoff
        ]
        qualifying.sort(key=lambda kv: (-kv[1], kv[0]))
        motifs = [
            MotifEntry(rank, sig, sig_nodes[sig], c, 100.0 * c / total)
            for rank, (sig, c) in enumerate(qualifying, start=1)
        ]
    return MotifCensus(kind, total, one_node, cutoff, max_nodes, sig_counts, motifs, size_groups)


def motif_census(networks, kind: str | None = None, cutoff: float = 0.005,
                 max_nodes: int = 6, pin_home: bool = True) -> MotifCensus:
    """Census of canonical classes over built daily networks.

    One-node networks are tallied separately; networks above max_nodes join
    only the largest size group. A class is a motif when its share of all
    networks strictly exceeds the cutoff; the list is ranked by frequency.
    """
    if kind is None:
        kind = networks[0].kind if networks else LBM
    items = []
    for net in networks:
        n = net.node_count
        sig = None
        if 1 < n <= max_nodes:
            sig = canonical_signature(net, kind, pin_home).signature_string
        items.append((n, sig))
    return census_from_signatures(items, kind, cutoff, max_nodes)


def network_from_label_walk(label_walk, user_id: str = "", local_date=None) -> DailyNetwork:
    """Build a network directly from a walk of stop tokens.

    Tokens are location identities; a token's alphabetic prefix is its
    activity label ("W2" is a second distinct work location). "H" is home
    and must open and close the walk. Useful for fixtures and generators.
    """
    if label_walk[0] != HOME_LABEL or label_walk[-1] != HOME_LABEL:
        raise ValueError("walk must start and end at home")
    node_index: dict[str, int] = {}
    labels = []
    walk = []
    for token in label_walk:
        if walk and node_index.get(token) == walk[-1]:
            continue
        if token not in node_index:
            node_index[token] = len(node_index)
            labels.append(token.rstrip("0123456789"))
        walk.append(node_index[token])
    edges = frozenset(zip(walk, walk[1:]))
    keys = tuple(sorted(node_index, key=node_index.get))
    return DailyNetwork(LBM, user_id, local_date, keys, tuple(labels), edges, tuple(walk))
