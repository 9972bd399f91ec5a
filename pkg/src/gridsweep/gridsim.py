"""Deterministic discrete-event simulator of a desktop-grid master.

Pull-based scheduling: an up host with a free CPU slot requests work.
Shared tasks feed one logical queue interleaved round-robin by task;
dedicated tasks run only after every shared job has finished.  Hosts churn
through a per-host two-state on/off process with exponential holding
times; a job interrupted by a host detach restarts from zero on a later
host.  Everything is deterministic for a fixed seed.

Times are seconds throughout; churn rates on HostSpec are per hour.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SimulationStallError
from .hosts import HostPopulation, HostSpec

DISPATCH = "dispatch"
COMPLETE = "complete"
HOST_UP = "host_up"
HOST_DOWN = "host_down"

SECONDS_PER_HOUR = 3600.0
SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class TaskSpec:
    """A sweep task: n_jobs equal jobs, each t_job_ref_s on the reference host."""

    name: str
    t_job_ref_s: float
    n_jobs: int
    mode: str = "shared"  # 'shared' | 'dedicated'

    def __post_init__(self):
        if self.t_job_ref_s <= 0:
            raise ParameterError("t_job_ref_s must be > 0")
        if self.n_jobs < 1:
            raise ParameterError("n_jobs must be >= 1")
        if self.mode not in ("shared", "dedicated"):
            raise ParameterError(f"unknown task mode {self.mode!r}")


@dataclass(frozen=True)
class ReferenceHost:
    """The moderate reference PC all job runtimes are quoted against."""

    gflops: float = 2.514

    def __post_init__(self):
        if self.gflops <= 0:
            raise ParameterError("reference gflops must be > 0")


@dataclass(frozen=True)
class SimPolicy:
    dispatch_latency_s: float = 0.0
    #: optional per-job log-normal report delay (seconds); None disables it
    report_delay_logmu: float | None = None
    report_delay_logsigma: float = 0.0
    horizon_s: float = 400 * SECONDS_PER_DAY


@dataclass(frozen=True)
class TraceEvent:
    time: float
    kind: str
    job_id: int  # -1 for host events
    task: str  # '' for host events
    host_id: int


@dataclass
class SimTrace:
    events: list[TraceEvent]
    tasks: list[TaskSpec]
    ref: ReferenceHost

    def task_names(self) -> list[str]:
        return [t.name for t in self.tasks]

    def events_for(self, task_name: str) -> list[TraceEvent]:
        return [e for e in self.events if e.task == task_name]


@dataclass(frozen=True)
class RegimeSegmentation:
    """Three-regime split of one task's completion kinetics."""

    task: str
    t_start: float
    t_initial_end: float
    t_active_end: float
    t_end: float
    rate_initial: float  # completions per second within each regime
    rate_active: float
    rate_final: float
    max_inflight: int
    degenerate: bool


def scaled_runtime(task: TaskSpec, host: HostSpec, ref: ReferenceHost = ReferenceHost()) -> float:
    """Job runtime on a host under linear FLOPs scaling, in seconds."""
    if host.gflops <= 0:
        raise ParameterError("host gflops must be > 0")
    return task.t_job_ref_s * ref.gflops / host.gflops


class _HostState:
    __slots__ = ("spec", "up", "free", "running", "rng")

    def __init__(self, spec: HostSpec, rng: np.random.Generator):
        self.spec = spec
        self.up = False
        self.free = spec.n_cpus
        self.running: dict[int, int] = {}  # job gid -> attempt
        self.rng = rng


class _Sim:
    def __init__(self, tasks, pop: HostPopulation, seed, policy: SimPolicy,
                 ref: ReferenceHost):
        if not pop.hosts:
            raise ParameterError("population must contain at least one host")
        names = [t.name for t in tasks]
        if len(set(names)) != len(names):
            raise ParameterError("task names must be unique")
        self.tasks = list(tasks)
        self.policy = policy
        self.ref = ref
        self.shared_idx = [i for i, t in enumerate(self.tasks) if t.mode == "shared"]
        self.dedicated_idx = [i for i, t in enumerate(self.tasks) if t.mode == "dedicated"]
        self.queues = [deque(range(t.n_jobs)) for t in self.tasks]
        self.rr = 0  # round-robin cursor into shared_idx
        self.shared_inflight = 0
        self.job_attempt = [[0] * t.n_jobs for t in self.tasks]
        # global job ids: task-major, stable across the run
        self.gid_base = np.cumsum([0] + [t.n_jobs for t in self.tasks]).tolist()
        self.total_jobs = sum(t.n_jobs for t in self.tasks)
        self.completions = 0
        self.seed = seed
        self.hosts = [
            _HostState(h, np.random.default_rng([seed & 0x7FFFFFFFFFFFFFFF, 1, i]))
            for i, h in enumerate(pop.hosts)
        ]
        self.heap: list = []
        self.seq = 0
        self.events: list[TraceEvent] = []

    # -- event plumbing ---------------------------------------------------

    def _push(self, time, kind, data):
        heapq.heappush(self.heap, (time, self.seq, kind, data))
        self.seq += 1

    def _record(self, time, kind, job_gid, task_name, host_id):
        self.events.append(TraceEvent(time, kind, job_gid, task_name, host_id))

    # -- scheduling policy ------------------------------------------------

    def _next_job(self):
        """(task_idx, job_idx) of the next job to hand out, or None."""
        ns = len(self.shared_idx)
        for step in range(ns):
            ti = self.shared_idx[(self.rr + step) % ns]
            if self.queues[ti]:
                self.rr = (self.rr + step + 1) % ns
                return ti, self.queues[ti].popleft()
        if self.shared_inflight == 0:
            for ti in self.dedicated_idx:
                if self.queues[ti]:
                    return ti, self.queues[ti].popleft()
        return None

    def _offer_work(self, hi: int, now: float):
        host = self.hosts[hi]
        while host.up and host.free > 0:
            nxt = self._next_job()
            if nxt is None:
                return
            ti, ji = nxt
            gid = self.gid_base[ti] + ji
            attempt = self.job_attempt[ti][ji]
            host.running[gid] = attempt
            host.free -= 1
            if self.tasks[ti].mode == "shared":
                self.shared_inflight += 1
            self._record(now, DISPATCH, gid, self.tasks[ti].name, hi)
            runtime = scaled_runtime(self.tasks[ti], host.spec, self.ref)
            finish = now + self.policy.dispatch_latency_s + runtime
            self._push(finish, "finish", (hi, ti, ji, attempt))

    def _offer_all(self, now: float):
        """Offer queued work to every up host with free slots, in host order.

        Needed whenever work (re)appears outside a host's own event: requeues
        after a detach, and the shared -> dedicated phase transition.
        """
        for hi in range(len(self.hosts)):
            host = self.hosts[hi]
            if host.up and host.free > 0:
                self._offer_work(hi, now)

    def _gid_split(self, gid: int) -> tuple[int, int]:
        for ti in range(len(self.tasks) - 1, -1, -1):
            if gid >= self.gid_base[ti]:
                return ti, gid - self.gid_base[ti]
        raise AssertionError(gid)

    def _report_delay(self, gid: int, attempt: int) -> float:
        mu = self.policy.report_delay_logmu
        if mu is None:
            return 0.0
        rng = np.random.default_rng([self.seed & 0x7FFFFFFFFFFFFFFF, 2, gid, attempt])
        return float(rng.lognormal(mu, self.policy.report_delay_logsigma))

    # -- event handlers ---------------------------------------------------

    def _handle_host_up(self, hi, now):
        host = self.hosts[hi]
        host.up = True
        self._record(now, HOST_UP, -1, "", hi)
        off = host.spec.off_rate
        if off > 0:
            self._push(now + host.rng.exponential(SECONDS_PER_HOUR / off), "down", hi)
        self._offer_work(hi, now)

    def _handle_host_down(self, hi, now):
        host = self.hosts[hi]
        host.up = False
        self._record(now, HOST_DOWN, -1, "", hi)
        # restart-from-zero: requeue everything this host was running
        for gid in list(host.running):
            ti, ji = self._gid_split(gid)
            self.job_attempt[ti][ji] += 1  # invalidates the pending finish
            self.queues[ti].append(ji)
            if self.tasks[ti].mode == "shared":
                self.shared_inflight -= 1
        requeued = bool(host.running)
        host.running.clear()
        host.free = host.spec.n_cpus
        on = host.spec.on_rate
        if on > 0:
            self._push(now + host.rng.exponential(SECONDS_PER_HOUR / on), "up", hi)
        if requeued:
            self._offer_all(now)

    def _handle_finish(self, data, now):
        hi, ti, ji, attempt = data
        if self.job_attempt[ti][ji] != attempt:
            return  # stale: the host detached mid-run and the job was requeued
        host = self.hosts[hi]
        gid = self.gid_base[ti] + ji
        del host.running[gid]
        host.free += 1
        if self.tasks[ti].mode == "shared":
            self.shared_inflight -= 1
        self.job_attempt[ti][ji] += 1  # mark done; never requeued again
        self.completions += 1
        self._record(now + self._report_delay(gid, attempt), COMPLETE, gid,
                     self.tasks[ti].name, hi)
        gate_opened = (self.tasks[ti].mode == "shared" and self.shared_inflight == 0
                       and not any(self.queues[s] for s in self.shared_idx))
        self._offer_work(hi, now)
        if gate_opened:
            self._offer_all(now)  # dedicated work just became eligible everywhere

    # -- main loop --------------------------------------------------------

    def run(self) -> SimTrace:
        # Hosts begin in the stationary state of their on/off process; being
        # up at t=0 is an initial condition, not a transition, so it leaves
        # no host_up record (an always-up host contributes no host events).
        initial_up = []
        for hi, host in enumerate(self.hosts):
            on, off = host.spec.on_rate, host.spec.off_rate
            if off == 0:
                initial_up.append(hi)
            elif on == 0:
                continue  # down forever
            else:
                p_up = on / (on + off)
                if host.rng.random() < p_up:
                    initial_up.append(hi)
                else:
                    self._push(host.rng.exponential(SECONDS_PER_HOUR / on), "up", hi)
        for hi in initial_up:
            host = self.hosts[hi]
            host.up = True
            off = host.spec.off_rate
            if off > 0:
                self._push(host.rng.exponential(SECONDS_PER_HOUR / off), "down", hi)
        for hi in initial_up:
            self._offer_work(hi, 0.0)

        while self.completions < self.total_jobs:
            if not self.heap:
                raise SimulationStallError(
                    "no future events but work is pending (no host ever up?)")
            now, _, kind, data = heapq.heappop(self.heap)
            if now > self.policy.horizon_s:
                raise SimulationStallError(
                    f"simulation passed horizon {self.policy.horizon_s} s with "
                    f"{self.total_jobs - self.completions} jobs unfinished")
            if kind == "up":
                self._handle_host_up(data, now)
            elif kind == "down":
                self._handle_host_down(data, now)
            else:
                self._handle_finish(data, now)

        # report delays can reorder completions relative to host events
        self.events.sort(key=lambda e: e.time)
        return SimTrace(events=self.events, tasks=self.tasks, ref=self.ref)


def run_scenario(tasks, pop: HostPopulation, seed: int = 0,
                 policy: SimPolicy = SimPolicy(),
                 ref: ReferenceHost = ReferenceHost()) -> SimTrace:
    """Simulate the full scenario and return its event trace."""
    return _Sim(tasks, pop, seed, policy, ref).run()


# --- trace analysis ------------------------------------------------------


def _task_by_name(trace: SimTrace, task_name: str) -> TaskSpec:
    for t in trace.tasks:
        if t.name == task_name:
            return t
    raise ParameterError(f"unknown task {task_name!r}")


def _task_window(trace: SimTrace, task: TaskSpec) -> tuple[float, float]:
    """(first dispatch, last completion); raises if the task never finished."""
    first_dispatch = None
    last_complete = None
    n_complete = 0
    for e in trace.events:
        if e.task != task.name:
            continue
        if e.kind == DISPATCH and first_dispatch is None:
            first_dispatch = e.time
        elif e.kind == COMPLETE:
            last_complete = e.time
            n_complete += 1
    if n_complete != task.n_jobs or first_dispatch is None:
        raise ParameterError(
            f"task {task.name!r} incomplete: {n_complete}/{task.n_jobs} jobs done")
    return first_dispatch, last_complete


def task_makespan(trace: SimTrace, task_name: str) -> float:
    """T_dg of one task: first dispatch to last completion, seconds."""
    task = _task_by_name(trace, task_name)
    start, end = _task_window(trace, task)
    return end - start


def task_speedup(trace: SimTrace, task_name: str) -> float:
    """T_seq / T_dg for a single completed task."""
    task = _task_by_name(trace, task_name)
    t_seq = task.n_jobs * task.t_job_ref_s
    return t_seq / task_makespan(trace, task_name)


def total_speedup(trace: SimTrace) -> float:
    """Overall speedup with the shared subtotal taken as the column maximum.

    Shared tasks overlap, so their combined T_dg is the max of their
    makespans; dedicated tasks ran on their own and add their makespans.
    """
    t_seq = sum(t.n_jobs * t.t_job_ref_s for t in trace.tasks)
    shared = [task_makespan(trace, t.name) for t in trace.tasks if t.mode == "shared"]
    dedicated = [task_makespan(trace, t.name) for t in trace.tasks if t.mode == "dedicated"]
    t_dg = (max(shared) if shared else 0.0) + sum(dedicated)
    if t_dg <= 0:
        raise ParameterError("trace has no completed tasks")
    return t_seq / t_dg


def segment_regimes(trace: SimTrace, task_name: str) -> RegimeSegmentation:
    """Split one task's history into initial / active / final regimes.

    The initial stage ends when the task's in-flight job count first
    reaches its maximum; the active stage ends at the task's last dispatch;
    the final stage runs to the last completion.  Per-regime rates are
    completions per second (0 for an empty or zero-length regime).
    """
    task = _task_by_name(trace, task_name)
    start, end = _task_window(trace, task)

    running_on: dict[int, set] = {}  # host -> gids of this task
    inflight = 0
    max_inflight = 0
    t_initial_end = start
    t_active_end = start
    completion_times = []
    for e in trace.events:
        if e.kind == DISPATCH and e.task == task_name:
            running_on.setdefault(e.host_id, set()).add(e.job_id)
            inflight += 1
            t_active_end = e.time
            if inflight > max_inflight:
                max_inflight = inflight
                t_initial_end = e.time
        elif e.kind == COMPLETE and e.task == task_name:
            completion_times.append(e.time)
            # the slot was freed at finish time; report delay only shifts the record
            running = running_on.get(e.host_id)
            if running and e.job_id in running:
                running.remove(e.job_id)
                inflight -= 1
        elif e.kind == HOST_DOWN:
            lost = running_on.pop(e.host_id, None)
            if lost:
                inflight -= len(lost)

    t_initial_end = min(t_initial_end, t_active_end)
    degenerate = t_initial_end == t_active_end == start

    def rate(t0, t1):
        if t1 <= t0:
            return 0.0
        n = sum(1 for t in completion_times if t0 < t <= t1)
        if t0 == start:  # include completions exactly at the window start
            n += sum(1 for t in completion_times if t == start)
        return n / (t1 - t0)

    return RegimeSegmentation(
        task=task_name,
        t_start=start,
        t_initial_end=t_initial_end,
        t_active_end=t_active_end,
        t_end=end,
        rate_initial=rate(start, t_initial_end),
        rate_active=rate(t_initial_end, t_active_end),
        rate_final=rate(t_active_end, end),
        max_inflight=max_inflight,
        degenerate=degenerate,
    )


# --- external interfaces -------------------------------------------------

TRACE_CSV_HEADER = ["time_s", "kind", "job_id", "task", "host_id"]
SPEEDUP_CSV_HEADER = ["task", "t_job_hours", "n_jobs", "t_seq_days", "t_dg_days", "speedup"]
REGIMES_CSV_HEADER = ["task", "t_start_s", "t_initial_end_s", "t_active_end_s", "t_end_s",
                      "rate_initial_per_s", "rate_active_per_s", "rate_final_per_s",
                      "max_inflight", "degenerate"]


def write_trace_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_CSV_HEADER)
        for e in trace.events:
            job = "" if e.job_id < 0 else e.job_id
            w.writerow([repr(e.time), e.kind, job, e.task, e.host_id])


def speedup_report_rows(trace: SimTrace) -> list[list]:
    """Rows for the speedup CSV, in published-table order with subtotal/total."""
    rows = []
    shared = [t for t in trace.tasks if t.mode == "shared"]
    dedicated = [t for t in trace.tasks if t.mode == "dedicated"]

    def row(name, t_job_s, n_jobs, t_seq_s, t_dg_s):
        return [name, repr(t_job_s / SECONDS_PER_HOUR) if t_job_s else "",
                n_jobs, repr(t_seq_s / SECONDS_PER_DAY), repr(t_dg_s / SECONDS_PER_DAY),
                repr(t_seq_s / t_dg_s)]

    shared_dg = []
    for t in shared:
        dg = task_makespan(trace, t.name)
        shared_dg.append(dg)
        rows.append(row(t.name, t.t_job_ref_s, t.n_jobs, t.n_jobs * t.t_job_ref_s, dg))
    if shared:
        seq = sum(t.n_jobs * t.t_job_ref_s for t in shared)
        rows.append(row("Subtotal", 0, sum(t.n_jobs for t in shared), seq, max(shared_dg)))
    ded_dg = []
    for t in dedicated:
        dg = task_makespan(trace, t.name)
        ded_dg.append(dg)
        rows.append(row(t.name, t.t_job_ref_s, t.n_jobs, t.n_jobs * t.t_job_ref_s, dg))
    total_seq = sum(t.n_jobs * t.t_job_ref_s for t in trace.tasks)
    total_dg = (max(shared_dg) if shared_dg else 0.0) + sum(ded_dg)
    rows.append(row("TOTAL", 0, sum(t.n_jobs for t in trace.tasks), total_seq, total_dg))
    return rows


def write_speedup_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPEEDUP_CSV_HEADER)
        w.writerows(speedup_report_rows(trace))


def write_regimes_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REGIMES_CSV_HEADER)
        for t in trace.tasks:
            r = segment_regimes(trace, t.name)
            w.writerow([r.task, repr(r.t_start), repr(r.t_initial_end),
                        repr(r.t_active_end), repr(r.t_end), repr(r.rate_initial),
                        repr(r.rate_active), repr(r.rate_final), r.max_inflight,
                        int(r.degenerate)])
