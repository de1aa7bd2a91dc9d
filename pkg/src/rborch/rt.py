"""Per-TTI control: queue hysteresis FSM, guaranteed-RB mitigation and
deadline-driven sharing of unused RBs.

State A keeps the near-RT guarantee unchanged; B accumulates an extra-RB
request while the head packet's wait is above the upper threshold; C holds
the request while the wait sits between the thresholds.  Mitigation moves
RBs round-robin from state-A donors to B/C borrowers, conserving the total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

STATE_A = "A"
STATE_B = "B"
STATE_C = "C"


@dataclass(frozen=True)
class FsmRecord:
    state: str = STATE_A
    n_req: int = 0

    def __post_init__(self):
        if self.state not in (STATE_A, STATE_B, STATE_C):
            raise ValueError(f"unknown state {self.state!r}")
        if self.n_req < 0:
            raise ValueError("n_req must be non-negative")
        if self.state == STATE_A and self.n_req != 0:
            raise ValueError("state A requires n_req == 0")


@dataclass(frozen=True)
class RtThresholds:
    """Queue-wait thresholds in TTIs for one service."""

    q_t: int
    eta: float = 0.75
    tau: float = 0.3

    def __post_init__(self):
        if self.q_t < 1:
            raise ValueError("q_t must be a positive TTI count")
        if not (0.0 < self.eta <= 1.0) or not (0.0 < self.tau <= 1.0):
            raise ValueError("eta and tau must lie in (0, 1]")
        if self.q_upper <= self.q_lower:
            raise ValueError(
                f"q_upper ({self.q_upper}) must exceed q_lower ({self.q_lower}); "
                "delay budget too small for the chosen eta/tau"
            )

    @property
    def q_upper(self) -> int:
        return int(self.eta * self.q_t)

    @property
    def q_lower(self) -> int:
        return int(self.tau * self.q_t)

    @classmethod
    def for_budget(cls, w_th_ms: float, t_slot_ms: float, eta: float, tau: float) -> "RtThresholds":
        return cls(int(w_th_ms / t_slot_ms), eta, tau)


def fsm_step(q: int, prev: FsmRecord, thr: RtThresholds) -> FsmRecord:
    """Advance one service's state given its head-packet wait q (TTIs)."""
    if q > thr.q_upper:
        return FsmRecord(STATE_B, prev.n_req + 1)
    if q < thr.q_lower:
        return FsmRecord(STATE_A, 0)
    # within [q_lower, q_upper]: hold the request unless we never left A
    if prev.state == STATE_A:
        return FsmRecord(STATE_A, 0)
    return FsmRecord(STATE_C, prev.n_req)


def mitigate(n_min: Sequence[int], records: Sequence[FsmRecord]) -> list[int]:
    """Temporarily rebalance guarantees from idle (A) to stressed (B/C) services.

    Performs sum(n_req over borrowers) single-RB moves, cycling donors and
    borrowers round-robin; donors at zero RBs are skipped and the loop stops
    early once no donor has anything left.  The total allocation is conserved.
    """
    if len(n_min) != len(records):
        raise ValueError("allocation and FSM record lengths differ")
    alloc = [int(v) for v in n_min]
    donors = [m for m, r in enumerate(records) if r.state == STATE_A]
    borrowers = [m for m, r in enumerate(records) if r.state != STATE_A]
    if not donors or not borrowers:
        return alloc
    n_ite = sum(records[m].n_req for m in borrowers)
    j_d = 0
    j_b = 0
    for _ in range(n_ite):
        scanned = 0
        while alloc[donors[j_d]] == 0:
            j_d = (j_d + 1) % len(donors)
            scanned += 1
            if scanned == len(donors):
                return alloc
        alloc[donors[j_d]] -= 1
        alloc[borrowers[j_b]] += 1
        j_d = (j_d + 1) % len(donors)
        j_b = (j_b + 1) % len(borrowers)
    return alloc


def drain_queue(queue, budget_bits: int, bits_per_rb: int, tti: int, service_id: int, completed: list) -> int:
    """Send up to budget_bits from a FIFO packet queue; returns bits sent.

    Packets are lists [arrival_tti, size, remaining, rb_frac]; an RB may end
    one packet and start the next, so bits flow as one pipe.  Completed
    packets are appended as (service_id, arrival_tti, size, rbs_used, tti).
    """
    sent = 0
    while queue and sent < budget_bits:
        pkt = queue[0]
        take = budget_bits - sent
        rem = pkt[2]
        if take >= rem:
            take = rem
            pkt[3] += take / bits_per_rb
            sent += take
            queue.popleft()
            completed.append((service_id, pkt[0], pkt[1], max(1, math.ceil(pkt[3] - 1e-9)), tti))
        else:
            pkt[2] = rem - take
            pkt[3] += take / bits_per_rb
            sent += take
    return sent


def schedule_tti(
    tti: int,
    queues: Sequence,
    alloc: Sequence[int],
    bits_per_rb: Sequence[int],
    n_cell: int,
    q_t: Sequence[int],
    share: bool = True,
):
    """Serve all queues for one TTI: guaranteed phase then deadline sharing.

    Phase 1 drains each queue with its own guaranteed RBs.  Phase 2 hands the
    unused guaranteed RBs plus the unguaranteed pool, one RB at a time, to the
    backlogged service whose head packet has the least slack to its budget
    (ties to the lowest service index).  Returns (rbs_used, completed).
    """
    m_count = len(queues)
    rbs_used = [0] * m_count
    completed: list = []

    for m in range(m_count):
        n = alloc[m]
        if n <= 0 or not queues[m]:
            continue
        c = bits_per_rb[m]
        sent = drain_queue(queues[m], n * c, c, tti, m, completed)
        rbs_used[m] = -(-sent // c)

    if not share:
        return rbs_used, completed

    pool = n_cell - sum(rbs_used)
    backlog = [m for m in range(m_count) if queues[m]]
    while pool > 0 and backlog:
        best = min(backlog, key=lambda m: (q_t[m] - (tti - queues[m][0][0]), m))
        c = bits_per_rb[best]
        head_rem = queues[best][0][2]
        # the winner keeps winning until its head packet changes, so grant
        # the RBs needed to finish the head in one batch
        k = min(pool, -(-head_rem // c))
        sent = drain_queue(queues[best], k * c, c, tti, best, completed)
        used = -(-sent // c)
        rbs_used[best] += used
        pool -= used
        if not queues[best]:
            backlog.remove(best)
    return rbs_used, completed
