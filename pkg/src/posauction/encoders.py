"""Compile auction settings into action-graph games.

Per bidder and bid amount there is one action node.  Counting function
nodes keyed by *effective bid* (bid times bidder weight) give each action
node a local view of how many rivals tie with it or beat it; weighted
argmax nodes recover the next lower effective bid for second-price
payments.  Distinct (bidder, bid) pairs with the same effective bid share
one counting node, so tie counting works across equal-weight bidders and
argmax arc weights stay pairwise distinct.

Bids of zero are non-participation: their action nodes carry constant-zero
tables and contribute no tokens anywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agg import ACTION, ARGMAX, OR, SUM, ActionGraphGame, ConfigTable, Node
from .mechanisms import MechanismSpec, apply_weight_rule, rounded_price
from .models import AuctionSetting, GimSetting, Setting

DEFAULT_VALUE_CAP = 100_000
DEFAULT_ENTRY_CAP = 20_000_000


class EncodingSizeError(RuntimeError):
    """The encoded game would exceed a configured size cap."""


@dataclass(frozen=True)
class EffectiveBidIndex:
    """Sorted distinct effective bids with a (bidder, bid) -> slot map.

    ``values[0]`` is always 0.0 (the empty-bid sentinel); every positive
    (bidder, bid) pair maps to the slot of its exact product.
    """

    values: np.ndarray
    index: np.ndarray  # (n, k_max + 1) slots into values

    @property
    def count(self) -> int:
        return len(self.values)


def effective_bid_index(weights: np.ndarray, k_max: int,
                        cap: int = DEFAULT_VALUE_CAP) -> EffectiveBidIndex:
    n = len(weights)
    distinct = sorted({float(k * weights[i]) for i in range(n) for k in range(1, k_max + 1)})
    values = np.array([0.0] + distinct)
    if len(values) > cap:
        raise EncodingSizeError(
            f"{len(values)} distinct effective bids exceed the cap of {cap}")
    slot = {v: t for t, v in enumerate(values)}
    index = np.zeros((n, k_max + 1), dtype=np.int64)
    for i in range(n):
        for k in range(1, k_max + 1):
            index[i, k] = slot[float(k * weights[i])]
    return EffectiveBidIndex(values, index)


@dataclass(frozen=True)
class EncoderMeta:
    """Layout hints for the vectorized equilibrium scan (semantics live in
    the graph; this only records how configs map to table axes)."""

    kind: str  # "noext-uniform" | "noext-lex" | "gim"
    family: str
    eidx: np.ndarray
    num_values: int


def _extended_rows(setting: AuctionSetting) -> tuple[np.ndarray, np.ndarray]:
    """Click/value rows padded to 2n positions: clicks go to zero, values
    repeat their last column (table boxes cover some unreachable positions)."""
    n = setting.n
    clicks = np.zeros((n, 2 * n))
    values = np.zeros((n, 2 * n))
    clicks[:, :n] = setting.clicks
    values[:, :n] = setting.values
    values[:, n:] = setting.values[:, -1:]
    return clicks, values


def _zero_table() -> dict:
    return {(): 0.0}


def _encode_no_ext(setting: AuctionSetting, mech: MechanismSpec,
                   cap: int) -> ActionGraphGame:
    n, k_max = setting.n, mech.k_max
    w = apply_weight_rule(setting, mech)
    ebi = effective_bid_index(w, k_max, cap)
    gsp = mech.family == "gsp"
    lex = mech.tie_rule == "lexicographic"

    nodes: list[Node] = []
    agents: list[list[int]] = []
    for i in range(n):
        row = []
        for k in range(k_max + 1):
            nodes.append(Node(ACTION, owner=i, label=f"bid({i},{k})"))
            row.append(len(nodes) - 1)
        agents.append(row)

    by_value: dict[int, list[tuple[int, int]]] = {}
    for i in range(n):
        for k in range(1, k_max + 1):
            by_value.setdefault(int(ebi.index[i, k]), []).append((i, k))

    T = ebi.count
    eq = {}
    gt = {}
    pm = {}
    for t in range(1, T):
        nodes.append(Node(SUM, in_arcs=[(agents[i][k], None) for i, k in by_value[t]],
                          label=f"eq@{ebi.values[t]:g}"))
        eq[t] = len(nodes) - 1
    for t in range(T - 1, 0, -1):
        arcs = []
        if t + 1 < T:
            arcs = [(eq[t + 1], None), (gt[t + 1], None)]
        nodes.append(Node(SUM, in_arcs=arcs, label=f"above@{ebi.values[t]:g}"))
        gt[t] = len(nodes) - 1
    if gsp:
        for t in range(1, T):
            arcs = [(eq[u], float(ebi.values[u])) for u in range(1, t)]
            nodes.append(Node(ARGMAX, in_arcs=arcs, label=f"price@{ebi.values[t]:g}"))
            pm[t] = len(nodes) - 1

    eq_side = {}
    if lex:
        for t, pairs in by_value.items():
            owners = sorted({i for i, _ in pairs})
            for i in owners:
                lo_arcs = [(agents[j][k], None) for j, k in pairs if j < i]
                hi_arcs = [(agents[j][k], None) for j, k in pairs if j > i]
                nodes.append(Node(SUM, in_arcs=lo_arcs, label=f"eq_lo@{t}/{i}"))
                eq_side[(t, i, "lo")] = len(nodes) - 1
                nodes.append(Node(SUM, in_arcs=hi_arcs, label=f"eq_hi@{t}/{i}"))
                eq_side[(t, i, "hi")] = len(nodes) - 1

    clicks_x, values_x = _extended_rows(setting)
    tables: dict[int, object] = {}
    for i in range(n):
        s1 = np.concatenate([[0.0], np.cumsum(clicks_x[i] * values_x[i])])
        s2 = np.concatenate([[0.0], np.cumsum(clicks_x[i])])
        for k in range(k_max + 1):
            node_id = agents[i][k]
            if k == 0:
                tables[node_id] = _zero_table()
                continue
            t = int(ebi.index[i, k])
            prices = None
            if gsp:
                prices = np.array([rounded_price(float(ebi.values[r]), float(w[i]),
                                                 mech.rounding)
                                   for r in range(t)], dtype=float)
            if not lex:
                node = nodes[node_id]
                node.in_arcs = [(eq[t], None), (gt[t], None)]
                ell = np.arange(1, n + 1)[:, None]
                g = np.arange(n)[None, :]
                if gsp:
                    node.in_arcs.append((pm[t], None))
                    mid = (s1[g + ell - 1] - s1[g]) - k * (s2[g + ell - 1] - s2[g])
                    c_last = clicks_x[i][(g + ell - 1).clip(max=2 * n - 1)]
                    v_last = values_x[i][(g + ell - 1).clip(max=2 * n - 1)]
                    data = (mid[:, :, None]
                            + c_last[:, :, None] * (v_last[:, :, None] - prices[None, None, :])
                            ) / ell[:, :, None]
                    tables[node_id] = ConfigTable((n, n, t), (1, 0, 0), data)
                else:
                    data = ((s1[g + ell] - s1[g]) - k * (s2[g + ell] - s2[g])) / ell
                    tables[node_id] = ConfigTable((n, n), (1, 0), data)
            else:
                # deterministic rank within the tied block: position is
                # g + (tied rivals with smaller id) + 1; only the block's
                # bottom bidder (no tied rival with larger id) pays rho
                node = nodes[node_id]
                lo_id = eq_side[(t, i, "lo")]
                hi_id = eq_side[(t, i, "hi")]
                node.in_arcs = [(lo_id, None), (hi_id, None), (gt[t], None)]
                lo = np.arange(n)[:, None]
                g = np.arange(n)[None, :]
                pos0 = (lo + g).clip(max=2 * n - 1)  # 0-based position index
                c_here = clicks_x[i][pos0]
                v_here = values_x[i][pos0]
                own = c_here * (v_here - float(k))  # axes (lo, g)
                if gsp:
                    node.in_arcs.append((pm[t], None))
                    data = np.empty((n, n, n, t))
                    data[:] = own[:, None, :, None]
                    data[:, 0, :, :] = (c_here[:, :, None]
                                        * (v_here[:, :, None] - prices[None, None, :]))
                    tables[node_id] = ConfigTable((n, n, n, t), (0, 0, 0, 0), data)
                else:
                    data = np.broadcast_to(own[:, None, :], (n, n, n)).copy()
                    tables[node_id] = ConfigTable((n, n, n), (0, 0, 0), data)

    meta = EncoderMeta("noext-lex" if lex else "noext-uniform", mech.family,
                       ebi.index, T)
    return ActionGraphGame(agents, nodes, tables, meta=meta)


def encode_gfp(setting: AuctionSetting, mech: MechanismSpec,
               cap: int = DEFAULT_VALUE_CAP) -> ActionGraphGame:
    """First-price encoding: winners pay their own bid."""
    if mech.family != "gfp":
        raise ValueError("encode_gfp requires a gfp mechanism")
    return _encode_no_ext(setting, mech, cap)


def encode_gsp(setting: AuctionSetting, mech: MechanismSpec,
               cap: int = DEFAULT_VALUE_CAP) -> ActionGraphGame:
    """Second-price encoding: argmax price nodes recover the next lower
    effective bid, divided by the winner's weight and rounded."""
    if mech.family != "gsp":
        raise ValueError("encode_gsp requires a gsp mechanism")
    return _encode_no_ext(setting, mech, cap)


def encode_gim_gsp(setting: GimSetting, mech: MechanismSpec,
                   entry_cap: int = DEFAULT_ENTRY_CAP,
                   cap: int = DEFAULT_VALUE_CAP) -> ActionGraphGame:
    """Externality-setting encoding with per-rival tie/above indicator nodes.

    Utility tables average over the tied-rival lottery: by default each tied
    rival ranks above independently with probability one half; the
    ``permutation`` option weighs subsets as a uniform random order of the
    tied block instead.  The bidder pays the argmax price only when every
    tied rival ranks above it (it sits at the bottom of its block).
    """
    n, k_max = setting.n, mech.k_max
    w = apply_weight_rule(setting, mech)
    ebi = effective_bid_index(w, k_max, cap)
    gsp = mech.family == "gsp"
    lex = mech.tie_rule == "lexicographic"
    T = ebi.count

    est = n * k_max * (2 ** (2 * (n - 1))) * max(T - 1, 1)
    if est > entry_cap:
        raise EncodingSizeError(
            f"estimated {est} table entries exceed the cap of {entry_cap}")

    nodes: list[Node] = []
    agents: list[list[int]] = []
    for i in range(n):
        row = []
        for k in range(k_max + 1):
            nodes.append(Node(ACTION, owner=i, label=f"bid({i},{k})"))
            row.append(len(nodes) - 1)
        agents.append(row)

    present = {}
    for t in range(1, T):
        arcs = [(agents[i][k], None) for i in range(n) for k in range(1, k_max + 1)
                if ebi.index[i, k] == t]
        nodes.append(Node(OR, in_arcs=arcs, label=f"present@{ebi.values[t]:g}"))
        present[t] = len(nodes) - 1
    pm = {}
    if gsp:
        for t in range(1, T):
            arcs = [(present[u], float(ebi.values[u])) for u in range(1, t)]
            nodes.append(Node(ARGMAX, in_arcs=arcs, label=f"price@{ebi.values[t]:g}"))
            pm[t] = len(nodes) - 1

    tables: dict[int, object] = {}
    r_count = n - 1
    for i in range(n):
        rivals = [j for j in range(n) if j != i]
        for k in range(k_max + 1):
            node_id = agents[i][k]
            if k == 0:
                tables[node_id] = _zero_table()
                continue
            t = int(ebi.index[i, k])
            arcs: list[tuple[int, float | None]] = []
            for j in rivals:
                srcs = [(agents[j][kk], None) for kk in range(1, k_max + 1)
                        if ebi.index[j, kk] == t]
                nodes.append(Node(OR, in_arcs=srcs, label=f"tied({i},{k})<-{j}"))
                arcs.append((len(nodes) - 1, None))
            for j in rivals:
                srcs = [(agents[j][kk], None) for kk in range(1, k_max + 1)
                        if ebi.index[j, kk] > t]
                nodes.append(Node(OR, in_arcs=srcs, label=f"over({i},{k})<-{j}"))
                arcs.append((len(nodes) - 1, None))
            if gsp:
                arcs.append((pm[t], None))
            nodes[node_id].in_arcs = arcs

            prices = (np.array([rounded_price(float(ebi.values[r]), float(w[i]),
                                              mech.rounding) for r in range(t)])
                      if gsp else None)
            dims = (2,) * (2 * r_count) + ((t,) if gsp else ())
            data = np.full(dims, np.nan)
            for tied in range(1 << r_count):
                bits_t = tuple(tied >> r & 1 for r in range(r_count))
                for above in range(1 << r_count):
                    if tied & above:
                        continue  # a rival cannot both tie and rank above
                    bits = bits_t + tuple(above >> r & 1 for r in range(r_count))
                    if gsp:
                        for r in range(t):
                            data[bits + (r,)] = _gim_cell(
                                setting, i, k, tied, above, float(prices[r]), mech, lex)
                    else:
                        data[bits] = _gim_cell(setting, i, k, tied, above,
                                               float(k), mech, lex)
            tables[node_id] = ConfigTable(dims, (0,) * len(dims), data)

    meta = EncoderMeta("gim", mech.family, ebi.index, T)
    return ActionGraphGame(agents, nodes, tables, meta=meta)


def _gim_cell(setting: GimSetting, i: int, k: int, tied: int, above: int,
              bottom_price: float, mech: MechanismSpec, lex: bool) -> float:
    """Expected utility of bidder i bidding k with the given rival masks."""
    rivals = setting.rivals(i)
    tied_ranks = [r for r in range(len(rivals)) if tied >> r & 1]
    ell = len(tied_ranks)
    q = float(setting.qualities[i])
    v = float(setting.values[i])
    f = setting.externality[i]

    def term(sub_mask: int, prob: float, is_bottom: bool) -> float:
        full = above | sub_mask
        pos = bin(full).count("1") + 1
        clicks = q * float(f[full]) if pos <= setting.m else 0.0
        price = bottom_price if is_bottom else float(k)
        return prob * clicks * (v - price)

    if lex:
        sub = 0
        for r in tied_ranks:
            if rivals[r] < i:
                sub |= 1 << r
        is_bottom = all(rivals[r] < i for r in tied_ranks)
        return term(sub, 1.0, is_bottom)

    total = 0.0
    if mech.gim_tie_lottery == "independent":
        base = 1.0 / (1 << ell)
        for choice in range(1 << ell):
            sub = 0
            for b, r in enumerate(tied_ranks):
                if choice >> b & 1:
                    sub |= 1 << r
            total += term(sub, base, choice == (1 << ell) - 1)
    else:
        for choice in range(1 << ell):
            s = bin(choice).count("1")
            prob = (math.factorial(s) * math.factorial(ell - s)
                    / math.factorial(ell + 1))
            sub = 0
            for b, r in enumerate(tied_ranks):
                if choice >> b & 1:
                    sub |= 1 << r
            total += term(sub, prob, choice == (1 << ell) - 1)
    return total


def encode(setting: Setting, mech: MechanismSpec, **kwargs) -> ActionGraphGame:
    """Dispatch on the setting shape and mechanism family."""
    if isinstance(setting, GimSetting):
        return encode_gim_gsp(setting, mech, **kwargs)
    if mech.family == "gfp":
        return encode_gfp(setting, mech, **kwargs)
    return encode_gsp(setting, mech, **kwargs)
