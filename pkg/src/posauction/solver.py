"""Dominated-bid pruning and exact pure-equilibrium enumeration.

The scan walks the pruned profile lattice and keeps a profile iff no bidder
has a unilateral deviation improving its payoff by more than 1e-9.  Encoded
auction games carry layout metadata that lets the scan compute payoffs with
vectorized counting instead of per-profile graph propagation; the generic
path is kept for arbitrary games and as a cross-check.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .agg import ActionGraphGame, ConfigTable, deviation_best_response, evaluate_profile
from .encoders import EncoderMeta
from .mechanisms import MechanismSpec
from .models import AuctionSetting, Setting

BR_TOL = 1e-9
DEFAULT_BUDGET = 50_000_000
_CHUNK = 1 << 19


def prune_dominated(setting: Setting, mech: MechanismSpec, k_max: int | None = None
                    ) -> list[list[int]]:
    """Per-bidder allowed bids: 0 up to the ceiling of the bidder's largest
    per-click value.  Bidding above that ceiling is weakly dominated; nothing
    else is removed, so the equilibrium set of the pruned game is reported
    in full.
    """
    k_max = mech.k_max if k_max is None else k_max
    values = np.asarray(setting.values)
    if isinstance(setting, AuctionSetting):
        vbar = values.max(axis=1)
    else:
        vbar = values
    return [list(range(0, min(k_max, math.ceil(v)) + 1)) for v in vbar]


@dataclass
class EquilibriumSet:
    """All pure equilibria of one (pruned) game.

    ``solved`` is False when the scan hit its profile budget, in which case
    ``profiles`` holds only the equilibria found before the cutoff and
    downstream statistics substitute metric bounds.  ``metrics`` is filled
    by the experiment pipeline, one value list per metric aligned with
    ``profiles``.
    """

    game_id: str
    profiles: list[tuple[int, ...]]
    solved: bool
    scanned: int = 0
    metrics: dict[str, list[float]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.profiles)

    def to_json_dict(self) -> dict:
        return {
            "game_id": self.game_id,
            "solved": self.solved,
            "scanned": self.scanned,
            "profiles": [list(p) for p in self.profiles],
            "metrics": self.metrics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def enumerate_psne(game: ActionGraphGame, allowed: list[list[int]] | None = None,
                   budget: int = DEFAULT_BUDGET) -> EquilibriumSet:
    """Enumerate every pure Nash equilibrium over the allowed bid sets.

    Deterministic: profiles come out in lexicographic bid order.  If the
    lattice exceeds ``budget`` profiles the scan stops there and reports
    ``solved=False`` with whatever it found.
    """
    if allowed is None:
        allowed = [list(range(len(a))) for a in game.agents]
    sizes = [len(a) for a in allowed]
    if any(s == 0 for s in sizes):
        raise ValueError("every bidder needs at least one allowed bid")
    total = math.prod(sizes)

    if total <= budget and _fast_layout(game) is not None:
        profiles = _scan_fast(game, allowed)
        return EquilibriumSet(game.name, profiles, True, scanned=total)

    profiles = []
    scanned = 0
    solved = total <= budget
    for combo in itertools.product(*allowed):
        if scanned >= budget:
            solved = False
            break
        scanned += 1
        payoffs = evaluate_profile(game, combo)
        if all(deviation_best_response(game, combo, i)[0] <= payoffs[i] + BR_TOL
               for i in range(game.num_agents)):
            profiles.append(tuple(combo))
    return EquilibriumSet(game.name, profiles, solved, scanned=scanned)


def _fast_layout(game: ActionGraphGame):
    meta = game.meta
    if isinstance(meta, EncoderMeta) and meta.kind in ("noext-uniform", "noext-lex", "gim"):
        return meta
    return None


def _scan_fast(game: ActionGraphGame, allowed: list[list[int]]) -> list[tuple[int, ...]]:
    """Vectorized scan: two passes over profile chunks, the first collecting
    each bidder's best payoff against every rival profile, the second
    keeping profiles where everybody best-responds."""
    meta: EncoderMeta = game.meta
    n = game.num_agents
    sizes = np.array([len(a) for a in allowed])
    total = int(np.prod(sizes))

    # strides of the rival-profile key for each bidder (own axis removed)
    rival_strides = []
    for i in range(n):
        stride = np.ones(n, dtype=np.int64)
        acc = 1
        for j in range(n - 1, -1, -1):
            if j == i:
                stride[j] = 0
                continue
            stride[j] = acc
            acc *= sizes[j]
        rival_strides.append(stride)
    best = [np.full(total // sizes[i], -np.inf) for i in range(n)]

    def chunks():
        for start in range(0, total, _CHUNK):
            stop = min(start + _CHUNK, total)
            flat = np.arange(start, stop)
            idx = np.array(np.unravel_index(flat, sizes))  # (n, chunk)
            yield idx

    def payoffs_for(idx: np.ndarray, i: int) -> np.ndarray:
        own_bids_all = np.array(allowed[i])[idx[i]]
        t = meta.eidx[i][own_bids_all]
        rival_rows = [meta.eidx[j][np.array(allowed[j])[idx[j]]]
                      for j in range(n) if j != i]
        rival_t = (np.stack(rival_rows) if rival_rows
                   else np.zeros((0, idx.shape[1]), dtype=np.int64))
        out = np.zeros(idx.shape[1])
        live = t > 0  # zero bids pay off zero
        if not live.any():
            return out
        tl = t[live]
        rl = rival_t[:, live]
        own_bids = own_bids_all[live]
        rho = (np.max(np.where(rl < tl, rl, 0), axis=0) if n > 1
               else np.zeros(tl.shape, dtype=np.int64))
        vals = np.empty(tl.shape)
        if meta.kind == "gim":
            r_count = n - 1
            # rank 0 occupies the most significant reshape axis
            bit = (1 << np.arange(r_count - 1, -1, -1))[:, None]
            tied_axis = ((rl == tl) * bit).sum(axis=0)
            above_axis = ((rl > tl) * bit).sum(axis=0)
            for bid in np.unique(own_bids):
                sel = own_bids == bid
                table: ConfigTable = game.tables[game.agents[i][int(bid)]]
                flat = table.data.reshape(1 << r_count, 1 << r_count, -1)
                rho_sel = rho[sel] if meta.family == "gsp" else 0
                vals[sel] = flat[tied_axis[sel], above_axis[sel], rho_sel]
            out[live] = vals
            return out
        eq = (rl == tl).sum(axis=0)
        gt = (rl > tl).sum(axis=0)
        if meta.kind == "noext-lex":
            rj = np.array([j for j in range(n) if j != i])
            lo = ((rl == tl) & (rj[:, None] < i)).sum(axis=0) if n > 1 else eq * 0
            hi = ((rl == tl) & (rj[:, None] > i)).sum(axis=0) if n > 1 else eq * 0
        for bid in np.unique(own_bids):
            sel = own_bids == bid
            table: ConfigTable = game.tables[game.agents[i][int(bid)]]
            if meta.kind == "noext-uniform":
                if meta.family == "gsp":
                    vals[sel] = table.data[eq[sel], gt[sel], rho[sel]]
                else:
                    vals[sel] = table.data[eq[sel], gt[sel]]
            else:
                if meta.family == "gsp":
                    vals[sel] = table.data[lo[sel], hi[sel], gt[sel], rho[sel]]
                else:
                    vals[sel] = table.data[lo[sel], hi[sel], gt[sel]]
        out[live] = vals
        return out

    for idx in chunks():
        for i in range(n):
            key = (rival_strides[i][:, None] * idx).sum(axis=0)
            np.maximum.at(best[i], key, payoffs_for(idx, i))

    hits = []
    for idx in chunks():
        mask = np.ones(idx.shape[1], dtype=bool)
        for i in range(n):
            key = (rival_strides[i][:, None] * idx).sum(axis=0)
            mask &= payoffs_for(idx, i) >= best[i][key] - BR_TOL
        for col in np.nonzero(mask)[0]:
            hits.append(tuple(int(allowed[i][idx[i][col]]) for i in range(n)))
    return hits


def select(values: list[float], criterion: str) -> float:
    """min / median / max over per-equilibrium metric values; the median is
    the lower median (index floor((t-1)/2) of the ascending sort)."""
    if not values:
        raise ValueError("cannot select from an empty value list")
    if criterion == "min":
        return min(values)
    if criterion == "max":
        return max(values)
    if criterion == "median":
        ordered = sorted(values)
        return ordered[(len(ordered) - 1) // 2]
    raise ValueError(f"unknown selection criterion {criterion!r}")


def envy_free_filter(profiles, setting: Setting, mech: MechanismSpec):
    """Keep the equilibria whose total (normalized) envy is zero."""
    from .mechanisms import simulate_outcome
    from .metrics import total_envy

    kept = []
    for profile in profiles:
        outcome = simulate_outcome(setting, mech, list(profile))
        envy = total_envy(outcome, setting)
        if envy is not None and envy <= 1e-9:
            kept.append(tuple(profile))
    return kept
