import math

import networkx as nx
import numpy as np
import pandas as pd
import pytest

from agents.engine import exposure_frame, run_simulation
from agents.models import OverloadParams, SeedActivity, SimConfig
from measures.cascades import (
    BinningSpec,
    Distribution,
    build_cascades,
    cascade_table,
    exposure_response_curve,
    histogram,
    js_divergence,
    log2_bin_edges,
    measure,
    neighbor_popularity,
    neighborhood_presence,
    overload_exposure_analysis,
    paired_distributions,
    wiener_index,
    wiener_sum,
)
from sources.influence import InfluenceEdge, InfluenceNetwork
from sources.synthetic import hub_overload_network, poisson_event_log, star_network

from .conftest import C, I, S


def _random_tree_log(make_event, make_log, n, seed, pool=10):
    rng = np.random.default_rng(seed)
    events = [make_event("u0", "n0")]
    for i in range(1, n):
        parent = f"n{int(rng.integers(0, i))}"
        events.append(make_event(f"u{int(rng.integers(0, pool))}", f"n{i}", parent=parent, root="n0",
                                 action=C, hour=i))
    return make_log(events)


def test_single_initiation(make_event, make_log):
    (tree,) = build_cascades(make_log([make_event("u", "a")]))
    metrics = measure(tree)
    assert (metrics.volume, metrics.virality, metrics.unique_users) == (1, 0.0, 1)


def test_root_with_two_replies(make_event, make_log):
    log = make_log([
        make_event("u", "r"),
        make_event("v", "a", parent="r", action=C, hour=1),
        make_event("w", "b", parent="r", action=C, hour=1),
    ])
    (tree,) = build_cascades(log)
    assert tree.graph.number_of_nodes() == 3
    assert max(tree.depth.values()) == 1
    assert wiener_index(tree) == pytest.approx(4 / 3)


def test_wiener_small_trees(make_event, make_log):
    pair = build_cascades(make_log([make_event("u", "r"), make_event("v", "a", parent="r", action=S)]))[0]
    assert wiener_index(pair) == 1.0
    path = build_cascades(make_log([
        make_event("u", "r"),
        make_event("v", "a", parent="r", action=C, hour=1),
        make_event("w", "b", parent="a", root="r", action=C, hour=2),
    ]))[0]
    assert wiener_index(path) == pytest.approx(4 / 3)
    assert wiener_sum(path) == 4


@pytest.mark.parametrize("n,seed", [(2, 0), (7, 1), (20, 2), (50, 3)])
def test_wiener_matches_brute_force(make_event, make_log, n, seed):
    (tree,) = build_cascades(_random_tree_log(make_event, make_log, n, seed))
    brute = nx.average_shortest_path_length(tree.graph.to_undirected())
    assert wiener_index(tree) == pytest.approx(brute, abs=1e-12)
    assert measure(tree).volume == n


def test_unique_participants(make_event, make_log):
    log = _random_tree_log(make_event, make_log, 40, seed=5)
    (tree,) = build_cascades(log)
    assert measure(tree).unique_users == len({e.user_id for e in log.events})
    assert measure(tree).unique_users <= measure(tree).volume


def test_volumes_conserve_events():
    log = poisson_event_log(n_users=30, horizon=60, rate=0.3, seed=6)
    table = cascade_table(log)
    assert table["volume"].sum() == len(log)
    assert table["root_id"].is_unique
    counts = log.to_frame().groupby("root_id").size()
    assert table.set_index("root_id")["volume"].to_dict() == counts.to_dict()


def test_dangling_parent_hangs_off_root(make_event, make_log):
    log = make_log([
        make_event("u", "r"),
        make_event("v", "a", parent="gone", root="r", action=C, hour=1),
    ])
    (tree,) = build_cascades(log)
    assert list(tree.graph.predecessors("a")) == ["r"]


def test_missing_root_event_uses_earliest(make_event, make_log):
    log = make_log([
        make_event("u", "a", parent="r", root="r", action=C, hour=1),
        make_event("v", "b", parent="a", root="r", action=S, hour=2),
    ])
    (tree,) = build_cascades(log)
    assert tree.root_id == "r"
    assert tree.root == "a"
    assert wiener_index(tree) == 1.0


def test_parent_cycle_is_broken(make_event, make_log):
    log = make_log([
        make_event("u", "r"),
        make_event("v", "a", parent="b", root="r", action=C, hour=1),
        make_event("w", "b", parent="a", root="r", action=C, hour=2),
    ])
    (tree,) = build_cascades(log)
    assert nx.is_arborescence(tree.graph)
    assert tree.graph.number_of_nodes() == 3


def test_log2_bin_edges():
    assert log2_bin_edges(5).tolist() == [1, 2, 3, 5, 9]
    dist = histogram([1, 2, 3, 4, 5, 8], log2_bin_edges(8))
    assert dist.counts.tolist() == [1, 1, 2, 2]
    assert dist.size == 6


def test_binning_spec_edges_are_shared():
    truth, simulated = paired_distributions([1, 2, 3], [4, 50], "volume", BinningSpec())
    assert np.array_equal(truth.edges, simulated.edges)
    v_truth, _ = paired_distributions([0.0, 1.5], [2.0], "virality", BinningSpec())
    assert len(v_truth.edges) == 21


def test_js_divergence_identical_and_disjoint():
    edges = np.array([0.0, 1.0, 2.0, 3.0])
    p = Distribution(edges, np.array([5, 0, 0]))
    q = Distribution(edges, np.array([0, 2, 3]))
    assert js_divergence(p, p) == 0.0
    assert js_divergence(p, q) == pytest.approx(1.0)


def test_js_divergence_matches_direct_formula():
    rng = np.random.default_rng(7)
    edges = np.arange(-0.5, 11.5)
    p = histogram(rng.binomial(10, 0.5, 100_000), edges)
    q = histogram(rng.binomial(10, 0.6, 100_000), edges)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    pp, qq = p.counts / p.size, q.counts / q.size
    m = (pp + qq) / 2
    expected = 0.5 * kl(pp, m) + 0.5 * kl(qq, m)
    assert js_divergence(p, q) == pytest.approx(expected, abs=1e-9)
    assert js_divergence(q, p) == pytest.approx(js_divergence(p, q), abs=1e-12)
    assert 0.0 < js_divergence(p, q) < 1.0


def test_js_divergence_errors():
    p = Distribution(np.array([0.0, 1.0, 2.0]), np.array([1, 1]))
    with pytest.raises(ValueError):
        js_divergence(p, Distribution(np.array([0.0, 1.0, 3.0]), np.array([1, 1])))
    with pytest.raises(ValueError):
        js_divergence(p, Distribution(p.edges, np.array([0, 0])))


def test_exposure_response_curve():
    exposures = pd.DataFrame({
        "recipient": ["a", "a", "b", "b"],
        "conversation_id": ["c1", "c2", "c1", "c3"],
        "delivered_at": [1, 1, 1, 2],
        "exposures": [1, 2, 1, 2],
        "responded": [True, False, False, False],
    })
    curve = exposure_response_curve(exposures)
    assert curve["exposures"].tolist() == [1, 2]
    assert curve["p_response"].tolist() == [0.5, 0.0]
    assert curve["samples"].tolist() == [2, 2]


def test_empty_ledger_gives_empty_tables():
    empty = pd.DataFrame(columns=["recipient", "sender", "conversation_id", "delivered_at"])
    cascades = pd.DataFrame(columns=["root_id", "volume", "virality", "unique_users"])
    traces = pd.DataFrame(columns=["t", "agent", "load"])
    assert overload_exposure_analysis(traces, empty, None, cascades).empty
    assert neighborhood_presence(empty, cascades).empty
    assert neighbor_popularity(empty, cascades).empty


def test_neighborhood_fractions():
    ledger = pd.DataFrame({
        "recipient": ["x", "x", "x", "x"],
        "sender": ["a", "b", "a", "c"],
        "conversation_id": ["c1", "c1", "c2", "c2"],
        "delivered_at": [1, 1, 2, 2],
    })
    cascades = pd.DataFrame({"root_id": ["c1", "c2"], "volume": [10, 3], "virality": [1.0, 1.0],
                             "unique_users": [4, 2]})
    presence = neighborhood_presence(ledger, cascades).set_index("volume")
    assert presence.loc[10, "mean_fraction"] == 0.5
    popularity = neighbor_popularity(ledger, cascades).set_index("unique_users")
    assert popularity.loc[4, "mean_fraction"] == pytest.approx(2 / 3)


def test_total_overload_leaves_no_outgoing_events():
    network, seeds = star_network(n_spokes=60, q=0.5, horizon=30)
    result = run_simulation(network, SimConfig(horizon=30, seed=1, params=OverloadParams(m_max=30, alpha=1.0)), seeds)
    cascades = cascade_table(result.log)
    table = overload_exposure_analysis(result.traces, result.ledger.to_frame(), result.log, cascades)
    top = table[table["load_lo"] == 50].iloc[0]
    assert top["agent_steps"] > 0
    assert top["incoming_messages"] > 0
    assert top["outgoing_events"] == 0
    assert math.isnan(top["outgoing_volume"])


def test_exposure_curve_from_simulation():
    network, seeds = star_network(n_spokes=10, q=1.0, horizon=5)
    result = run_simulation(network, SimConfig(horizon=5, seed=2, params=OverloadParams(m_max=1000)), seeds)
    curve = exposure_response_curve(exposure_frame(result.ledger.to_frame()))
    assert (curve["p_response"] == 1.0).all()


def _hub_exposure_table(alpha, hub_rate, seed):
    network, seeds = hub_overload_network(n_spokes=60, q=0.5, hub_rate=hub_rate, horizon=100)
    config = SimConfig(horizon=100, seed=seed).with_params(30, alpha)
    result = run_simulation(network, config, seeds)
    table = overload_exposure_analysis(
        result.traces, result.ledger.to_frame(), result.log, cascade_table(result.log)
    )
    return table.set_index("load_lo")


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_overloaded_hub_passes_on_smaller_cascades_than_it_receives(seed):
    top = _hub_exposure_table(alpha=0.8, hub_rate=0.5, seed=seed).loc[50]
    assert top["incoming_messages"] > 0
    assert top["outgoing_events"] > 0
    assert top["incoming_volume"] > top["outgoing_volume"]


def test_hub_overload_at_unit_loss_rate_emits_nothing():
    table = _hub_exposure_table(alpha=1.0, hub_rate=0.0, seed=3)
    top = table.loc[50]
    assert top["agent_steps"] >= 99
    assert top["outgoing_events"] == 0
    assert (table.loc[table.index < 30, "outgoing_events"] > 0).any()


def test_exposure_response_falls_once_a_burst_overloads_the_listener():
    # conversation k reaches the listener through bursts[k] relays at step k + 2
    bursts = [1, 1, 2, 2, 3, 3, 20]
    edges, scheduled = [], []
    for k, size in enumerate(bursts):
        poster = f"p{k}"
        scheduled.append((k, poster))
        for j in range(size):
            relay = f"r{k}-{j:02d}"
            edges.append(InfluenceEdge(poster, relay, I, C, 1.0))
            edges.append(InfluenceEdge(relay, "listener", C, C, 1.0))
    network = InfluenceNetwork.from_edges(edges)
    config = SimConfig(horizon=10, params=OverloadParams(m_max=10, alpha=1.0))
    result = run_simulation(network, config, SeedActivity(scheduled_initiations=scheduled))

    curve = exposure_response_curve(exposure_frame(result.ledger.to_frame())).set_index("exposures")
    assert curve.index.tolist() == [1, 2, 3, 20]
    assert curve.loc[[1, 2, 3], "p_response"].tolist() == [1.0, 1.0, 1.0]
    peak_at = curve["p_response"].idxmax()
    assert peak_at < curve.index.max()
    assert curve.loc[20, "p_response"] <= 0.8 * curve["p_response"].max()
