"""Deterministic discrete-event simulation of task execution on machines.

Two execution paths produce identical traces for equivalent decisions:

* run_simulation(workload, assignment): event-driven replay of a static
  task-to-machine assignment. Each machine runs one task at a time and
  serves its queue FIFO in ready order.
* init_state / step: an online stepper for schedulers that decide one
  dispatch at a time. Dispatch actions do not advance the clock (several
  dispatches may share an instant); a no-op advances to the next event, or
  by one slot when nothing is scheduled.

A task becomes ready at max(arrival, latest predecessor completion). Input
and output data transfer is charged on the assigned machine before execution,
so a task occupies its machine for transfer_time + exec_time seconds.

Resource usage is sampled at integer slot boundaries: a user counts as
resident on a machine at slot s iff one of their tasks joined the machine
queue at or before s and completes after s. The first time the summed
resident demand for a (machine, resource) exceeds capacity fraction 1.0 an
overuse event is recorded; the pair never fires again.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DagValidationError, SimulationError
from .workload import (
    RESOURCES,
    Task,
    UsageProfile,
    VmSpec,
    WorkloadSet,
    validate_dag,
)

# Event ranks: completions are processed before ready events at equal times so
# successors observe predecessor completions, then ties break on task id.
_COMPLETION = 0
_READY = 1

Assignment = Mapping[int, int]  # task id -> vm id


@dataclass(frozen=True)
class TaskRecord:
    """Final timing of one executed task."""

    task_id: int
    machine_id: int
    arrival: float
    ready_time: float
    start: float
    completion: float
    wait: float
    transfer_time: float
    exec_time: float


@dataclass(frozen=True)
class OveruseEvent:
    machine_id: int
    resource: str
    time: float


@dataclass
class SimTrace:
    """Everything a simulation run produced.

    residency rows are (machine_id, user_id, join_time, completion_time) per
    task, the raw material for slot-level usage scans.
    """

    records: dict[int, TaskRecord] = field(default_factory=dict)
    machine_busy: dict[int, float] = field(default_factory=dict)
    queue_series: list[tuple[float, int]] = field(default_factory=list)
    overuse_events: list[OveruseEvent] = field(default_factory=list)
    residency: list[tuple[int, int, float, float]] = field(default_factory=list)

    @property
    def makespan(self) -> float:
        if not self.records:
            return 0.0
        return max(r.completion for r in self.records.values())


def _service_times(task: Task, spec: VmSpec) -> tuple[float, float]:
    transfer = (task.input_size + task.output_size) / spec.bandwidth
    exec_time = task.length / spec.mips
    return transfer, exec_time


def earliest_start_time(
    dag, task_id: int, completions: Mapping[int, float]
) -> float:
    """max(arrival, latest predecessor completion) given known completions."""
    by_id = {t.id: t for t in dag.tasks}
    if task_id not in by_id:
        raise SimulationError(f"unknown task id {task_id}")
    preds = dag.predecessors()[task_id]
    missing = sorted(p for p in preds if p not in completions)
    if missing:
        raise SimulationError(
            f"task {task_id}: predecessor completions unknown for {missing}"
        )
    est = by_id[task_id].arrival_time
    for p in preds:
        est = max(est, completions[p])
    return est


# ---------------------------------------------------------------------------
# Static-assignment replay
# ---------------------------------------------------------------------------

def run_simulation(workload: WorkloadSet, assignment: Assignment) -> SimTrace:
    """Simulate a static assignment to completion and return the trace."""
    dag = workload.dag
    check = validate_dag(dag)  # raises on dangling endpoints
    if not check.ok:
        raise DagValidationError(f"dag contains a cycle: {check.cycle}")
    tasks = {t.id: t for t in dag.tasks}
    vms = {v.id: v for v in workload.vms}
    missing = sorted(t for t in tasks if t not in assignment)
    if missing:
        raise SimulationError(f"assignment missing tasks: {missing}")
    bad_vms = sorted({assignment[t] for t in tasks} - set(vms))
    if bad_vms:
        raise SimulationError(f"assignment names unknown machines: {bad_vms}")

    preds = dag.predecessors()
    succs = dag.successors()
    remaining = {tid: len(ps) for tid, ps in preds.items()}

    queues: dict[int, deque[int]] = {v: deque() for v in vms}
    running: dict[int, int | None] = {v: None for v in vms}
    busy: dict[int, float] = {v: 0.0 for v in vms}
    ready_times: dict[int, float] = {}
    join_times: dict[int, float] = {}
    completions: dict[int, float] = {}
    starts: dict[int, tuple[float, float, float]] = {}  # tid -> (start, transfer, exec)
    records: dict[int, TaskRecord] = {}
    queue_series: list[tuple[float, int]] = []
    residency: list[tuple[int, int, float, float]] = []

    events: list[tuple[float, int, int]] = []
    for tid, task in tasks.items():
        if remaining[tid] == 0:
            heapq.heappush(events, (task.arrival_time, _READY, tid))

    def start_task(tid: int, now: float) -> None:
        vm_id = assignment[tid]
        transfer, exec_time = _service_times(tasks[tid], vms[vm_id])
        running[vm_id] = tid
        busy[vm_id] += transfer + exec_time
        starts[tid] = (now, transfer, exec_time)
        heapq.heappush(events, (now + transfer + exec_time, _COMPLETION, tid))

    while events:
        now, kind, tid = heapq.heappop(events)
        if kind == _READY:
            ready_times[tid] = now
            join_times[tid] = now
            vm_id = assignment[tid]
            if running[vm_id] is None:
                start_task(tid, now)
            else:
                queues[vm_id].append(tid)
        else:  # completion
            vm_id = assignment[tid]
            start, transfer, exec_time = starts[tid]
            task = tasks[tid]
            records[tid] = TaskRecord(
                task_id=tid,
                machine_id=vm_id,
                arrival=task.arrival_time,
                ready_time=ready_times[tid],
                start=start,
                completion=now,
                wait=start - ready_times[tid],
                transfer_time=transfer,
                exec_time=exec_time,
            )
            completions[tid] = now
            residency.append((vm_id, task.user_id, join_times[tid], now))
            running[vm_id] = None
            for succ in succs[tid]:
                remaining[succ] -= 1
                if remaining[succ] == 0:
                    ready_at = max(tasks[succ].arrival_time, now)
                    heapq.heappush(events, (ready_at, _READY, succ))
            if queues[vm_id]:
                start_task(queues[vm_id].popleft(), now)
        # Sample the queue length once all activity at this instant settled.
        if not events or events[0][0] > now:
            qlen = sum(len(q) for q in queues.values())
            queue_series.append((now, qlen))

    trace = SimTrace(
        records=records,
        machine_busy=busy,
        queue_series=queue_series,
        overuse_events=[],
        residency=residency,
    )
    trace.overuse_events = scan_overuse(trace, workload)
    return trace


def scan_overuse(trace: SimTrace, workload: WorkloadSet) -> list[OveruseEvent]:
    """Post-hoc slot scan for first-overshoot events, from residency rows."""
    if not workload.profiles or not trace.residency:
        return []
    pmap = workload.profile_map()
    horizon = int(math.ceil(trace.makespan))
    by_machine: dict[int, list[tuple[int, float, float]]] = {}
    for m, u, t0, t1 in trace.residency:
        by_machine.setdefault(m, []).append((u, t0, t1))
    events: list[OveruseEvent] = []
    fired: set[tuple[int, str]] = set()
    for s in range(horizon):
        for m, rows in sorted(by_machine.items()):
            users = sorted({u for u, t0, t1 in rows if t0 <= s < t1})
            if not users:
                continue
            for d in RESOURCES:
                if (m, d) in fired:
                    continue
                demand = 0.0
                for u in users:
                    prof = pmap.get((u, d))
                    if prof is not None:
                        demand += prof.demand_at(s)
                if demand > 1.0:
                    fired.add((m, d))
                    events.append(OveruseEvent(m, d, float(s)))
    events.sort(key=lambda e: (e.time, e.machine_id, e.resource))
    return events


# ---------------------------------------------------------------------------
# Online stepping
# ---------------------------------------------------------------------------

@dataclass
class Machine:
    """Runtime state of one machine: FIFO queue plus the in-flight task."""

    spec: VmSpec
    queue: deque = field(default_factory=deque)
    running: int | None = None
    busy_until: float = 0.0
    busy_total: float = 0.0

    @property
    def in_use(self) -> bool:
        return self.running is not None or len(self.queue) > 0


@dataclass(frozen=True)
class MachineSnapshot:
    """Per-machine quantities a reward model needs at one instant."""

    machine_id: int
    in_use: bool
    used: dict[str, float]
    resident_profiles: dict[str, tuple[np.ndarray, ...]]


@dataclass(frozen=True)
class RewardInputs:
    """Observation of one step: queue pressure, usage, fresh overshoots."""

    clock: float
    queue_len: int
    machines: tuple[MachineSnapshot, ...]
    new_overuse: tuple[tuple[int, str], ...]


@dataclass
class SimState:
    """Mutable state of an online simulation episode."""

    workload: WorkloadSet
    clock: float
    machines: list[Machine]
    ready: list[int]
    events: list[tuple[float, int, int]]
    remaining: dict[int, int]
    ready_times: dict[int, float]
    starts: dict[int, tuple[float, float, float]]
    records: dict[int, TaskRecord]
    join_times: dict[int, float]
    dispatched: dict[int, int]
    residency: list[tuple[int, int, float, float]]
    queue_series: list[tuple[float, int]]
    fired: set[tuple[int, str]]
    overuse_events: list[OveruseEvent]
    tasks: dict[int, Task]
    vm_index: dict[int, int]

    @property
    def done(self) -> bool:
        return len(self.records) == len(self.tasks)

    def waiting_count(self) -> int:
        return len(self.ready) + sum(len(m.queue) for m in self.machines)

    def trace(self) -> SimTrace:
        events = sorted(
            self.overuse_events, key=lambda e: (e.time, e.machine_id, e.resource)
        )
        return SimTrace(
            records=dict(self.records),
            machine_busy={m.spec.id: m.busy_total for m in self.machines},
            queue_series=list(self.queue_series),
            overuse_events=events,
            residency=list(self.residency),
        )


def init_state(workload: WorkloadSet) -> SimState:
    """Build the initial online state; tasks ready at t=0 are already visible."""
    dag = workload.dag
    check = validate_dag(dag)
    if not check.ok:
        raise DagValidationError(f"dag contains a cycle: {check.cycle}")
    tasks = {t.id: t for t in dag.tasks}
    remaining = {tid: len(ps) for tid, ps in dag.predecessors().items()}
    events: list[tuple[float, int, int]] = []
    for tid, task in tasks.items():
        if remaining[tid] == 0:
            heapq.heappush(events, (task.arrival_time, _READY, tid))
    state = SimState(
        workload=workload,
        clock=0.0,
        machines=[Machine(spec=v) for v in workload.vms],
        ready=[],
        events=events,
        remaining=remaining,
        ready_times={},
        starts={},
        records={},
        join_times={},
        dispatched={},
        residency=[],
        queue_series=[],
        fired=set(),
        overuse_events=[],
        tasks=tasks,
        vm_index={v.id: i for i, v in enumerate(workload.vms)},
    )
    _absorb_events(state, 0.0)
    return state


def _absorb_events(state: SimState, now: float) -> None:
    # Move every event stamped <= now into the live state. Completions first.
    while state.events and state.events[0][0] <= now:
        t, kind, tid = heapq.heappop(state.events)
        if kind == _READY:
            state.ready_times[tid] = t
            state.ready.append(tid)
        else:
            _complete_task(state, tid, t)
    state.ready.sort(key=lambda tid: (state.ready_times[tid], tid))


def _complete_task(state: SimState, tid: int, now: float) -> None:
    task = state.tasks[tid]
    machine = state.machines[state.vm_index[state.dispatched[tid]]]
    start, transfer, exec_time = state.starts[tid]
    state.records[tid] = TaskRecord(
        task_id=tid,
        machine_id=machine.spec.id,
        arrival=task.arrival_time,
        ready_time=state.ready_times[tid],
        start=start,
        completion=now,
        wait=start - state.ready_times[tid],
        transfer_time=transfer,
        exec_time=exec_time,
    )
    state.residency.append((machine.spec.id, task.user_id, state.join_times[tid], now))
    machine.running = None
    succs = state.workload.dag.successors()[tid]
    for succ in succs:
        state.remaining[succ] -= 1
        if state.remaining[succ] == 0:
            ready_at = max(state.tasks[succ].arrival_time, now)
            heapq.heappush(state.events, (ready_at, _READY, succ))
    if machine.queue:
        _begin_execution(state, machine, machine.queue.popleft(), now)


def _begin_execution(state: SimState, machine: Machine, tid: int, now: float) -> None:
    transfer, exec_time = _service_times(state.tasks[tid], machine.spec)
    machine.running = tid
    machine.busy_until = now + transfer + exec_time
    machine.busy_total += transfer + exec_time
    state.starts[tid] = (now, transfer, exec_time)
    heapq.heappush(state.events, (machine.busy_until, _COMPLETION, tid))


def _resident_users(state: SimState, machine: Machine) -> list[int]:
    users = set()
    if machine.running is not None:
        users.add(state.tasks[machine.running].user_id)
    for tid in machine.queue:
        users.add(state.tasks[tid].user_id)
    return sorted(users)


def _sample_slot(state: SimState, slot: int) -> list[tuple[int, str]]:
    """Check every (machine, resource) for a first overshoot at this slot."""
    if not state.workload.profiles:
        return []
    pmap = state.workload.profile_map()
    fresh: list[tuple[int, str]] = []
    for machine in state.machines:
        users = _resident_users(state, machine)
        if not users:
            continue
        for d in RESOURCES:
            key = (machine.spec.id, d)
            if key in state.fired:
                continue
            demand = 0.0
            for u in users:
                prof = pmap.get((u, d))
                if prof is not None:
                    demand += prof.demand_at(slot)
            if demand > 1.0:
                state.fired.add(key)
                state.overuse_events.append(OveruseEvent(machine.spec.id, d, float(slot)))
                fresh.append(key)
    return fresh


def _snapshot(state: SimState, new_overuse: Sequence[tuple[int, str]]) -> RewardInputs:
    pmap = state.workload.profile_map()
    slot = int(math.floor(state.clock))
    snaps = []
    for machine in state.machines:
        users = _resident_users(state, machine)
        used: dict[str, float] = {}
        resident: dict[str, tuple[np.ndarray, ...]] = {}
        for d in RESOURCES:
            series = tuple(
                pmap[(u, d)].series for u in users if (u, d) in pmap
            )
            resident[d] = series
            used[d] = float(sum(pmap[(u, d)].demand_at(slot) for u in users if (u, d) in pmap))
        snaps.append(
            MachineSnapshot(
                machine_id=machine.spec.id,
                in_use=machine.in_use,
                used=used,
                resident_profiles=resident,
            )
        )
    return RewardInputs(
        clock=state.clock,
        queue_len=state.waiting_count(),
        machines=tuple(snaps),
        new_overuse=tuple(new_overuse),
    )


def step(
    state: SimState, action: tuple[int, int] | None
) -> tuple[SimState, RewardInputs]:
    """Apply one scheduling decision; returns the state and reward inputs.

    action is (task_id, machine_id) to dispatch a ready task, or None for a
    no-op. Dispatching leaves the clock unchanged; a no-op advances the clock
    to the next event (or one slot if none is scheduled) and processes it.
    The state is mutated in place and returned.
    """
    if action is not None:
        tid, vm_id = action
        if tid not in state.ready:
            raise SimulationError(f"task {tid} is not ready for dispatch")
        if vm_id not in state.vm_index:
            raise SimulationError(f"unknown machine id {vm_id}")
        machine = state.machines[state.vm_index[vm_id]]
        state.ready.remove(tid)
        state.join_times[tid] = state.clock
        state.dispatched[tid] = vm_id
        if machine.running is None:
            _begin_execution(state, machine, tid, state.clock)
        else:
            machine.queue.append(tid)
        fresh: list[tuple[int, str]] = []
        if state.clock == math.floor(state.clock):
            fresh = _sample_slot(state, int(state.clock))
        return state, _snapshot(state, fresh)

    # No-op: sample the settled queue, then advance.
    state.queue_series.append((state.clock, state.waiting_count()))
    fresh = []
    if state.events:
        target = state.events[0][0]
    elif state.done:
        return state, _snapshot(state, ())
    else:
        target = state.clock + 1.0
    # Visit integer slots crossed strictly before the target instant.
    s = math.floor(state.clock) + 1
    while s < target:
        fresh.extend(_sample_slot(state, int(s)))
        s += 1
    state.clock = target
    _absorb_events(state, target)
    if target == math.floor(target):
        fresh.extend(_sample_slot(state, int(target)))
    return state, _snapshot(state, fresh)


def replay_assignment(workload: WorkloadSet, assignment: Assignment) -> SimTrace:
    """Drive the online stepper with a static assignment; used as the
    cross-check twin of run_simulation."""
    tasks = {t.id for t in workload.dag.tasks}
    missing = sorted(t for t in tasks if t not in assignment)
    if missing:
        raise SimulationError(f"assignment missing tasks: {missing}")
    state = init_state(workload)
    guard = 0
    limit = 10 * len(tasks) + 100
    while not state.done:
        if state.ready:
            tid = state.ready[0]
            state, _ = step(state, (tid, assignment[tid]))
        else:
            state, _ = step(state, None)
        guard += 1
        if guard > limit and not state.events and not state.ready:
            raise SimulationError("replay stalled")  # pragma: no cover
    # Final settled sample to mirror run_simulation's last batch.
    state.queue_series.append((state.clock, state.waiting_count()))
    return state.trace()


# ---------------------------------------------------------------------------
# Trace serialization
# ---------------------------------------------------------------------------

TASK_CSV_COLUMNS = ("task_id", "machine_id", "arrival", "start", "completion", "wait")
USAGE_CSV_COLUMNS = ("machine_id", "slot", "resource", "used")


def write_task_csv(trace: SimTrace, path: str) -> None:
    """tasks CSV: one row per task, columns fixed by TASK_CSV_COLUMNS."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TASK_CSV_COLUMNS)
        for tid in sorted(trace.records):
            r = trace.records[tid]
            writer.writerow(
                [r.task_id, r.machine_id, repr(r.arrival), repr(r.start),
                 repr(r.completion), repr(r.wait)]
            )


def machine_usage_series(
    trace: SimTrace, workload: WorkloadSet
) -> dict[int, dict[str, np.ndarray]]:
    """Per-machine slot series: busy fraction plus resident profile demand."""
    horizon = int(math.ceil(trace.makespan))
    out: dict[int, dict[str, np.ndarray]] = {
        v.id: {"busy": np.zeros(horizon)} for v in workload.vms
    }
    for r in trace.records.values():
        lo, hi = r.start, r.completion
        for s in range(int(math.floor(lo)), min(horizon, int(math.ceil(hi)))):
            overlap = min(hi, s + 1) - max(lo, s)
            if overlap > 0:
                out[r.machine_id]["busy"][s] += overlap
    if workload.profiles:
        pmap = workload.profile_map()
        for v in workload.vms:
            for d in RESOURCES:
                out[v.id][d] = np.zeros(horizon)
        for m, u, t0, t1 in trace.residency:
            for s in range(horizon):
                if t0 <= s < t1:
                    for d in RESOURCES:
                        prof = pmap.get((u, d))
                        if prof is not None:
                            out[m][d][s] += prof.demand_at(s)
    return out


def write_usage_csv(trace: SimTrace, workload: WorkloadSet, path: str) -> None:
    """machine usage CSV, columns fixed by USAGE_CSV_COLUMNS."""
    series = machine_usage_series(trace, workload)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(USAGE_CSV_COLUMNS)
        for m in sorted(series):
            for d in sorted(series[m]):
                arr = series[m][d]
                for s in range(len(arr)):
                    writer.writerow([m, s, d, repr(float(arr[s]))])
