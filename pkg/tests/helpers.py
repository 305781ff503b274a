"""Small builders shared across test modules."""

import itertools

import numpy as np

from cloudsched.metrics import QosWeights, qos_scores, raw_qos
from cloudsched.simulator import run_simulation
from cloudsched.workload import Task, VmSpec, WorkloadSet


def vm(vid, mips=1000.0, **kw):
    return VmSpec(id=vid, mips=mips, **kw)


def task(tid, length=1000.0, arrival=0.0, **kw):
    return Task(id=tid, length=length, arrival_time=arrival, **kw)


def flat_workload(lengths, n_vms=1, mips=1000.0):
    """Independent tasks, all arriving at t=0, on identical machines."""
    tasks = [task(i, length=ln) for i, ln in enumerate(lengths)]
    vms = [vm(j, mips=mips) for j in range(n_vms)]
    return WorkloadSet.from_tasks(vms, tasks)


def random_instance(rng):
    """Small heterogeneous instance for oracle comparisons: 2-5 tasks, 2-3 vms."""
    n = int(rng.integers(2, 6))
    m = int(rng.integers(2, 4))
    vms = [
        VmSpec(
            id=j,
            mips=float(rng.choice([500.0, 1000.0, 2000.0])),
            instr_cost_rate=float(rng.choice([0.005, 0.01, 0.02])),
            bw_cost_rate=float(rng.choice([0.005, 0.01])),
        )
        for j in range(m)
    ]
    arrivals = np.sort(rng.uniform(0.0, 2.0, n))
    tasks = [
        Task(
            id=i,
            length=float(rng.uniform(500.0, 5000.0)),
            input_size=float(rng.uniform(10.0, 300.0)),
            output_size=float(rng.uniform(10.0, 300.0)),
            arrival_time=float(arrivals[i]),
        )
        for i in range(n)
    ]
    return WorkloadSet.from_tasks(vms, tasks)


def full_enumeration_raws(wl):
    """RawQos of every possible assignment, in lexicographic vector order."""
    vm_ids = [v.id for v in wl.vms]
    ids = [t.id for t in sorted(wl.tasks, key=lambda t: (t.arrival_time, t.id))]
    raws = []
    for vec in itertools.product(range(len(vm_ids)), repeat=len(ids)):
        assignment = {t: vm_ids[vec[i]] for i, t in enumerate(ids)}
        raws.append(raw_qos(run_simulation(wl, assignment), wl.vms, None))
    return raws


def score_with_pool(raws, wl, assignment, weights=QosWeights()):
    """Score one assignment inside the full-enumeration pool.

    Returns (candidate score, best score over the enumeration). A scheduler
    matches the oracle when the two agree within tolerance, and would beat it
    only if the candidate scored strictly below the pool minimum.
    """
    cand = raw_qos(run_simulation(wl, assignment), wl.vms, None)
    scores = qos_scores(list(raws) + [cand], weights)
    return scores[-1], min(scores[:-1])


def random_dag_workload(rng, max_nodes=10):
    """Random DAG over identical machines. Edges only go id-forward, so the
    graph is acyclic by construction."""
    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, 4))
    tasks = [
        Task(
            id=i,
            length=float(rng.uniform(200.0, 3000.0)),
            arrival_time=float(rng.uniform(0.0, 3.0)),
        )
        for i in range(n)
    ]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.25:
                edges.append((i, j))
    vms = [vm(j) for j in range(m)]
    from cloudsched.workload import DagWorkflow

    wl = WorkloadSet(vms, DagWorkflow(tasks, edges))
    assignment = {i: int(rng.integers(0, m)) for i in range(n)}
    return wl, assignment
