import random
from datetime import date

import pytest

from motifmine.annotate import HomeAssignment, UserDay
from motifmine.motifs import (
    ABM,
    LBM,
    abm_reduce,
    build_daily_network,
    canonical_signature,
    census_from_signatures,
    decode_signature,
    graph_signature,
    graphs_isomorphic,
    isomorphic,
    motif_census,
    network_from_label_walk,
    size_group_label,
)

from conftest import apoint
from oracles import brute_force_isomorphic, collapse_label_sequence

HOME = HomeAssignment("u1", 1, "night_mode")


def day_from_parcels(parcel_codes, user="u1"):
    """parcel_codes: [(parcel_id, activity_code)] in chronological order."""
    pts = [
        apoint(user=user, ts=i * 600, parcel=pid, code=code, local=i * 600)
        for i, (pid, code) in enumerate(parcel_codes)
    ]
    return UserDay(user, date(2014, 6, 2), pts, slot_count=len(pts))


class TestBuildDailyNetwork:
    def test_home_office_home(self):
        day = day_from_parcels([(1, 1), (2, 6), (1, 1)])
        net, reason = build_daily_network(day, HOME)
        assert reason is None
        assert net.node_count == 2
        assert net.labels == ("H", "W")
        assert net.edges == frozenset({(0, 1), (1, 0)})
        assert net.walk == (0, 1, 0)

    def test_consecutive_same_parcel_collapses(self):
        day = day_from_parcels([(1, 1)] * 4 + [(2, 6)] * 3 + [(1, 1)] * 2)
        net, _ = build_daily_network(day, HOME)
        assert net.walk == (0, 1, 0)

    def test_all_day_at_home_is_one_node(self):
        day = day_from_parcels([(1, 1)] * 10)
        net, reason = build_daily_network(day, HOME)
        assert reason is None
        assert net.node_count == 1
        assert net.edges == frozenset()
        assert net.walk == (0,)

    def test_open_walk_rejected(self):
        day = day_from_parcels([(2, 6), (1, 1), (2, 6)])
        net, reason = build_daily_network(day, HOME)
        assert net is None and reason == "open_walk"

    def test_missing_home_rejected(self):
        day = day_from_parcels([(1, 1), (2, 6), (1, 1)])
        net, reason = build_daily_network(day, HomeAssignment("u1", None, "unknown"))
        assert net is None and reason == "no_home"

    def test_labels_home_vs_other_residential(self):
        day = day_from_parcels([(1, 1), (9, 1), (1, 1)])
        net, _ = build_daily_network(day, HOME)
        assert net.labels == ("H", "R")

    def test_unanchored_points_form_one_pseudo_location(self):
        day = day_from_parcels([(1, 1), (None, 12), (2, 6), (None, 12), (1, 1)])
        net, _ = build_daily_network(day, HOME)
        # both unanchored runs land on the same node labeled O
        assert net.node_count == 3
        assert net.labels == ("H", "O", "W")
        assert net.walk == (0, 1, 2, 1, 0)

    def test_constraint_two_holds_for_random_closed_walks(self):
        rng = random.Random(17)
        for _ in range(200):
            length = rng.randrange(2, 9)
            walk = [1]
            for _ in range(length - 1):
                nxt = rng.choice([p for p in (1, 2, 3, 4) if p != walk[-1]])
                walk.append(nxt)
            walk.append(1)
            codes = {1: 1, 2: 6, 3: 9, 4: 1}
            day = day_from_parcels([(p, codes[p]) for p in walk])
            net, reason = build_daily_network(day, HOME)
            assert reason is None
            indeg = {i: 0 for i in range(net.node_count)}
            outdeg = {i: 0 for i in range(net.node_count)}
            for u, v in net.edges:
                outdeg[u] += 1
                indeg[v] += 1
            if net.node_count > 1:
                assert all(indeg[i] >= 1 and outdeg[i] >= 1 for i in indeg)


class TestAbmReduce:
    def test_two_work_parcels_merge(self):
        day = day_from_parcels([(1, 1), (2, 6), (3, 6), (1, 1)])
        net, _ = build_daily_network(day, HOME)
        reduced = abm_reduce(net)
        assert reduced.node_count == 2
        assert set(reduced.labels) == {"H", "W"}
        assert reduced.edges == frozenset({(0, 1), (1, 0)})

    def test_distinct_labels_keep_structure(self):
        day = day_from_parcels([(1, 1), (2, 6), (3, 9), (1, 1)])
        net, _ = build_daily_network(day, HOME)
        reduced = abm_reduce(net)
        assert reduced.node_count == 3
        assert reduced.labels == ("H", "W", "Sh")
        assert reduced.edges == frozenset({(0, 1), (1, 2), (2, 0)})

    def test_two_residences_collapse_to_pendulum(self):
        # walk H R H R H over two distinct friend homes
        day = day_from_parcels([(1, 1), (5, 1), (1, 1), (6, 1), (1, 1)])
        net, _ = build_daily_network(day, HOME)
        reduced = abm_reduce(net)
        label_walk = [net.labels[i] for i in net.walk]
        assert collapse_label_sequence(label_walk) == ["H", "R", "H", "R", "H"]
        assert reduced.node_count == 2
        assert set(reduced.labels) == {"H", "R"}
        assert reduced.edges == frozenset({(0, 1), (1, 0)})

    def test_idempotent_and_never_grows(self):
        rng = random.Random(23)
        codes = {1: 1, 2: 6, 3: 6, 4: 9, 5: 1, 6: 11}
        for _ in range(150):
            walk = [1]
            for _ in range(rng.randrange(1, 10)):
                walk.append(rng.choice([p for p in codes if p != walk[-1]]))
            walk.append(1)
            if walk[-2] == 1:
                walk.pop()
            day = day_from_parcels([(p, codes[p]) for p in walk])
            net, reason = build_daily_network(day, HOME)
            if reason:
                continue
            reduced = abm_reduce(net)
            assert reduced.node_count <= net.node_count
            again = abm_reduce(reduced)
            assert again.node_count == reduced.node_count
            assert again.edges == reduced.edges
            assert again.labels == reduced.labels
            assert again.walk == reduced.walk


class TestCanonicalSignature:
    def test_relabeling_same_signature(self):
        a = day_from_parcels([(1, 1), (2, 6), (1, 1)])
        b = day_from_parcels([(1, 1), (9, 9), (1, 1)])
        net_a, _ = build_daily_network(a, HOME)
        net_b, _ = build_daily_network(b, HOME)
        assert (
            canonical_signature(net_a, LBM).signature_string
            == canonical_signature(net_b, LBM).signature_string
        )

    def test_swapping_intermediate_stops_same_lbm_signature(self):
        a = day_from_parcels([(1, 1), (2, 6), (3, 9), (1, 1)])  # H A B H
        b = day_from_parcels([(1, 1), (3, 9), (2, 6), (1, 1)])  # H B A H
        net_a, _ = build_daily_network(a, HOME)
        net_b, _ = build_daily_network(b, HOME)
        sig_a = canonical_signature(net_a, LBM).signature_string
        sig_b = canonical_signature(net_b, LBM).signature_string
        assert sig_a == sig_b
        # the permutation oracle agrees the two are isomorphic
        assert brute_force_isomorphic(3, net_a.edges, 3, net_b.edges)

    def test_abm_label_mismatch_differs(self):
        work = day_from_parcels([(1, 1), (2, 6), (1, 1)])
        school = day_from_parcels([(1, 1), (2, 4), (1, 1)])
        net_w, _ = build_daily_network(work, HOME)
        net_s, _ = build_daily_network(school, HOME)
        red_w, red_s = abm_reduce(net_w), abm_reduce(net_s)
        assert (
            canonical_signature(red_w, ABM).signature_string
            != canonical_signature(red_s, ABM).signature_string
        )

    def test_signature_decode_roundtrip(self):
        edges = {(0, 1), (1, 2), (2, 0), (0, 2)}
        sig = graph_signature(3, edges)
        n, decoded, labels = decode_signature(sig)
        assert n == 3 and labels is None
        assert graph_signature(3, decoded) == sig

    def test_node_cap_enforced(self):
        with pytest.raises(ValueError):
            graph_signature(13, set())

    def test_abm_signature_invariant_to_presentation_order(self):
        # same labeled structure presented with nodes in different order
        edges_a = {(0, 1), (1, 0), (0, 2), (2, 0)}
        labels_a = ("H", "W", "R")
        edges_b = {(0, 2), (2, 0), (0, 1), (1, 0)}
        labels_b = ("H", "R", "W")
        assert graph_signature(3, edges_a, labels_a) == graph_signature(3, edges_b, labels_b)


def random_digraph(rng, n, p=0.4):
    return {
        (u, v)
        for u in range(n)
        for v in range(n)
        if u != v and rng.random() < p
    }


def relabeled(edges, n, rng, labels=None):
    perm = list(range(1, n))
    rng.shuffle(perm)
    mapping = {0: 0, **dict(zip(range(1, n), perm))}
    new_edges = {(mapping[u], mapping[v]) for u, v in edges}
    if labels is None:
        return new_edges, None
    new_labels = [None] * n
    for old, new in mapping.items():
        new_labels[new] = labels[old]
    return new_edges, tuple(new_labels)


class TestIsomorphic:
    def test_network_vs_itself(self):
        net, _ = build_daily_network(day_from_parcels([(1, 1), (2, 6), (1, 1)]), HOME)
        assert isomorphic(net, net, LBM)
        assert isomorphic(net, net, ABM)

    def test_different_cardinality(self):
        two, _ = build_daily_network(day_from_parcels([(1, 1), (2, 6), (1, 1)]), HOME)
        three, _ = build_daily_network(day_from_parcels([(1, 1), (2, 6), (3, 9), (1, 1)]), HOME)
        assert not isomorphic(two, three, LBM)

    def test_directed_cycle_vs_reversal(self):
        fwd, _ = build_daily_network(day_from_parcels([(1, 1), (2, 6), (3, 9), (1, 1)]), HOME)
        rev, _ = build_daily_network(day_from_parcels([(1, 1), (3, 9), (2, 6), (1, 1)]), HOME)
        assert isomorphic(fwd, rev, LBM)

    def test_agrees_with_signature_and_oracle_random_pairs(self):
        rng = random.Random(4242)
        label_pool = ["H", "W", "R", "Sh"]
        for _ in range(400):
            n = rng.randrange(2, 6)
            e1 = random_digraph(rng, n)
            if rng.random() < 0.5:
                e2, _ = relabeled(e1, n, rng)
            else:
                e2 = random_digraph(rng, n)
            got = graphs_isomorphic(n, e1, n, e2)
            want = brute_force_isomorphic(n, e1, n, e2)
            assert got == want
            assert (graph_signature(n, e1) == graph_signature(n, e2)) == want

    def test_labeled_agreement_with_oracle(self):
        rng = random.Random(777)
        for _ in range(300):
            n = rng.randrange(2, 6)
            labels1 = tuple(["H"] + [rng.choice(["W", "R", "Sh"]) for _ in range(n - 1)])
            e1 = random_digraph(rng, n)
            if rng.random() < 0.5:
                e2, labels2 = relabeled(e1, n, rng, labels1)
            else:
                e2 = random_digraph(rng, n)
                labels2 = tuple(["H"] + [rng.choice(["W", "R", "Sh"]) for _ in range(n - 1)])
            got = graphs_isomorphic(n, e1, n, e2, labels1, labels2)
            want = brute_force_isomorphic(n, e1, n, e2, labels1, labels2)
            assert got == want
            sig_equal = graph_signature(n, e1, labels1) == graph_signature(n, e2, labels2)
            assert sig_equal == want

    def test_home_pinning_distinguishes_star_from_chain(self):
        # bidirectional 3-path with home at the center vs at an end:
        # indistinguishable unpinned, distinct when home is pinned
        star = {(0, 1), (1, 0), (0, 2), (2, 0)}
        chain = {(0, 1), (1, 0), (1, 2), (2, 1)}
        assert graphs_isomorphic(3, star, 3, chain, pin_home=False)
        assert not graphs_isomorphic(3, star, 3, chain, pin_home=True)
        assert graph_signature(3, star, pin_home=False) == graph_signature(3, chain, pin_home=False)
        assert graph_signature(3, star) != graph_signature(3, chain)


class TestCensus:
    def sig(self, walk):
        return canonical_signature(network_from_label_walk(walk), LBM).signature_string

    def test_cutoff_is_strict(self):
        pendulum = self.sig(("H", "W", "H"))
        tour = self.sig(("H", "W", "Sh", "H"))
        items = [(2, pendulum)] * 995 + [(3, tour)] * 5
        census = census_from_signatures(items, LBM)
        assert [m.signature for m in census.motifs] == [pendulum]  # 0.5% exactly: excluded
        items = [(2, pendulum)] * 994 + [(3, tour)] * 6
        census = census_from_signatures(items, LBM)
        assert tour in [m.signature for m in census.motifs]

    def test_percentages_and_one_node_separate(self):
        nets = []
        for _ in range(50):
            nets.append(network_from_label_walk(("H", "W", "H")))
        for _ in range(30):
            nets.append(network_from_label_walk(("H", "W", "Sh", "H")))
        for _ in range(20):
            nets.append(network_from_label_walk(("H",)))
        census = motif_census(nets, LBM)
        assert census.total == 100
        assert census.one_node_count == 20
        by_sig = {m.signature: m for m in census.motifs}
        assert by_sig[self.sig(("H", "W", "H"))].percentage == pytest.approx(50.0)
        assert by_sig[self.sig(("H", "W", "Sh", "H"))].percentage == pytest.approx(30.0)
        assert census.motifs[0].rank == 1
        assert census.motifs[0].count == 50
        assert sum(census.size_group_percentages().values()) == pytest.approx(100.0)

    def test_census_invariant_under_input_permutation(self):
        rng = random.Random(5)
        walks = [("H", "W", "H"), ("H", "W", "Sh", "H"), ("H",), ("H", "R1", "H", "R2", "H")]
        nets = [network_from_label_walk(rng.choice(walks)) for _ in range(500)]
        census_a = motif_census(nets, LBM)
        shuffled = nets[:]
        rng.shuffle(shuffled)
        census_b = motif_census(shuffled, LBM)
        assert [(m.signature, m.count) for m in census_a.motifs] == [
            (m.signature, m.count) for m in census_b.motifs
        ]
        assert census_a.size_groups == census_b.size_groups

    def test_oversize_networks_only_in_size_bucket(self):
        tokens = ["H"] + [f"W{i}" for i in range(7)]
        walk = []
        for t in tokens:
            walk += [t]
        walk += ["H"]
        big = network_from_label_walk(tuple(walk))
        assert big.node_count == 8
        census = motif_census([big], LBM, max_nodes=6)
        assert census.size_groups["7+"] == 1
        assert not census.motifs
        assert census.signature_counts == {}

    def test_empty_census_is_valid(self):
        census = census_from_signatures([], LBM)
        assert census.total == 0 and census.motifs == []


def test_size_group_label():
    assert size_group_label(1) == "1"
    assert size_group_label(6) == "6"
    assert size_group_label(7) == "7+"
    assert size_group_label(30) == "7+"


def test_network_from_label_walk_requires_home_ends():
    with pytest.raises(ValueError):
        network_from_label_walk(("W", "H"))
