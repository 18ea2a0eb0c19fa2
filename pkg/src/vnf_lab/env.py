"""Discrete-epoch simulator of elastic VNF instances on an edge server pool plus cloud.

Server rows are indexed 0..k_servers-1, the cloud occupies row k_servers.
Users arrive per VNF as a Poisson stream whose rate is redrawn in blocks,
stay geometrically, and are placed one request at a time by an agent callback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# scale applied to raw user/arrival counts in the feature encoding
USER_SCALE = 10.0


@dataclass(frozen=True)
class VnfSpec:
    """Per-VNF resource elasticity, QoS band and arrival statistics."""

    id: int
    c0: float
    cr: float
    dc: float
    m0: float
    mr: float
    dm: float
    qos_min: float
    qos_max: float
    gamma_sla: float
    mu_arr: float
    sigma_arr: float
    p_stay: float = 0.5

    def __post_init__(self):
        if self.c0 < 0 or self.m0 < 0:
            raise ValueError(f"vnf {self.id}: base demands must be >= 0")
        if not self.cr > self.dc >= 0:
            raise ValueError(f"vnf {self.id}: requires cr > dc >= 0")
        if not self.mr > self.dm >= 0:
            raise ValueError(f"vnf {self.id}: requires mr > dm >= 0")
        if not 0 <= self.qos_min <= self.qos_max:
            raise ValueError(f"vnf {self.id}: requires 0 <= qos_min <= qos_max")
        if self.sigma_arr < 0:
            raise ValueError(f"vnf {self.id}: sigma_arr must be >= 0")
        if not 0.0 <= self.p_stay <= 1.0:
            raise ValueError(f"vnf {self.id}: p_stay must lie in [0, 1]")


@dataclass(frozen=True)
class CostParams:
    """Latency and pricing coefficients plus mixing weights."""

    d_rc: float = 3.0
    d_rm: float = 4.0
    d_db: float = 20.0
    d_dt: float = 10.0  # parsed for completeness, no operation consumes it
    c_rp: float = 6.0
    c_rm: float = 3.0
    c_i0: float = 2.0
    c_iv: float = 1.0
    c_c0: float = 1.0
    c_cv: float = 3.0
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 2.0
    unit_b: float = 1.0
    unit_c: float = 1.0  # kept configurable, no operation consumes it

    def __post_init__(self):
        for name in ("d_rc", "d_rm", "d_db", "d_dt", "c_rp", "c_rm",
                     "c_i0", "c_iv", "c_c0", "c_cv", "unit_b", "unit_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"costs.{name} must be >= 0")
        for name in ("w1", "w2", "w3"):
            if getattr(self, name) <= 0:
                raise ValueError(f"costs.{name} must be > 0")


@dataclass(frozen=True)
class PoolConfig:
    """Server pool shape: homogeneous capacities, VNF catalogue size."""

    k_servers: int = 10
    rho_max: float = 50.0
    eta_max: float = 50.0
    n_vnfs: int = 10

    def __post_init__(self):
        if self.k_servers < 1 or self.n_vnfs < 1:
            raise ValueError("pool.k_servers and pool.n_vnfs must be >= 1")
        if self.rho_max <= 0 or self.eta_max <= 0:
            raise ValueError("pool capacities must be > 0")


@dataclass(frozen=True)
class TrafficConfig:
    """Arrival-block and cloud-link dynamics."""

    t_max: int = 100
    mu_r: float = 10.0
    sigma_r: float = 2.0
    r_min: float = 1.0
    slot_t: float = 1.0

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("traffic.t_max must be >= 1")
        if self.sigma_r < 0:
            raise ValueError("traffic.sigma_r must be >= 0")
        if self.r_min <= 0:
            raise ValueError("traffic.r_min must be > 0")
        if self.slot_t <= 0:
            raise ValueError("traffic.slot_t must be > 0")


@dataclass(frozen=True)
class ParamAction:
    """Placement target (0..K-1 server, K cloud) with CPU/memory deltas."""

    target: int
    d_cpu: float = 0.0
    d_mem: float = 0.0


@dataclass
class StepOutcome:
    cost_psi: float
    infeasible: bool
    instance_cost: float
    network_cost: float
    next_state_features: np.ndarray


@dataclass
class EpochTraffic:
    """Traffic realization for one epoch."""

    arrivals: np.ndarray  # int64, shape (N,)
    lambdas: np.ndarray   # float64, shape (N,)
    cloud_rate: float
    epoch: int


@dataclass
class StepRecord:
    """One served request: encoded snapshots around a single action."""

    state: np.ndarray
    action: ParamAction
    cost_psi: float
    next_state: np.ndarray
    infeasible: bool
    had_user: bool


@dataclass
class EpochMetrics:
    epoch: int
    network_cost: float
    latency_per_user: float
    financial_per_user: float
    sla_per_user: float
    cpu_util: float
    mem_util: float
    cloud_fraction: float
    active_users: int
    mean_reward: float
    eps: float = 0.0
    clip_c: float = 0.0


@dataclass
class EpochSummary:
    metrics: EpochMetrics
    records: list
    snapshot: object = None


class SpecTable:
    """Column vectors of VnfSpec fields for vectorized cost evaluation."""

    def __init__(self, specs):
        self.specs = list(specs)
        as_vec = lambda name: np.array([getattr(s, name) for s in self.specs], dtype=np.float64)
        self.c0 = as_vec("c0")
        self.cr = as_vec("cr")
        self.dc = as_vec("dc")
        self.m0 = as_vec("m0")
        self.mr = as_vec("mr")
        self.dm = as_vec("dm")
        self.qos_min = as_vec("qos_min")
        self.qos_max = as_vec("qos_max")
        self.gamma_sla = as_vec("gamma_sla")
        self.mu_arr = as_vec("mu_arr")
        self.sigma_arr = as_vec("sigma_arr")
        self.p_stay = as_vec("p_stay")

    def __len__(self):
        return len(self.specs)


def _as_table(specs):
    return specs if isinstance(specs, SpecTable) else SpecTable(specs)


class AllocationState:
    """Mutable allocation matrices plus the previous-epoch snapshot."""

    def __init__(self, k_servers: int, n_vnfs: int):
        rows = k_servers + 1
        self.k_servers = k_servers
        self.n_vnfs = n_vnfs
        self.cpu = np.zeros((rows, n_vnfs))
        self.mem = np.zeros((rows, n_vnfs))
        self.users = np.zeros((rows, n_vnfs), dtype=np.int64)
        self.cpu_prev = np.zeros((rows, n_vnfs))
        self.mem_prev = np.zeros((rows, n_vnfs))
        self.server_active_prev = np.zeros(k_servers, dtype=bool)

    @property
    def cloud(self) -> int:
        return self.k_servers

    def snapshot_prev(self):
        """Freeze the current allocation as the next epoch's reference point."""
        self.cpu_prev = self.cpu.copy()
        self.mem_prev = self.mem.copy()
        self.server_active_prev = self.cpu[: self.k_servers].sum(axis=1) > 0

    def copy(self) -> "AllocationState":
        out = AllocationState(self.k_servers, self.n_vnfs)
        out.cpu = self.cpu.copy()
        out.mem = self.mem.copy()
        out.users = self.users.copy()
        out.cpu_prev = self.cpu_prev.copy()
        out.mem_prev = self.mem_prev.copy()
        out.server_active_prev = self.server_active_prev.copy()
        return out


# ---------------------------------------------------------------------------
# resource ranges and QoS

def resource_range(spec: VnfSpec, u: int):
    """Feasible (c_low, c_up, m_low, m_up) band for u users on one instance."""
    c_low = spec.c0 + (spec.cr - spec.dc) * u
    c_up = spec.c0 + (spec.cr + spec.dc) * u
    m_low = spec.m0 + (spec.mr - spec.dm) * u
    m_up = spec.m0 + (spec.mr + spec.dm) * u
    return c_low, c_up, m_low, m_up


def qos(spec: VnfSpec, u: int, c: float, m: float) -> float:
    """Piecewise QoS of one instance: 0 under the band, saturated above it,
    linear in capped c + m inside."""
    c_low, c_up, m_low, m_up = resource_range(spec, u)
    if c > c_up and m > m_up:
        return spec.qos_max
    if c < c_low or m < m_low:
        return 0.0
    r_up = c_up + m_up
    r_low = c_low + m_low
    den = r_up - r_low
    if den <= 0:
        # degenerate band (dc = dm = 0): anything feasible meets the top
        return spec.qos_max
    slope = (spec.qos_max - spec.qos_min) / den
    offset = (spec.qos_min * r_up - spec.qos_max * r_low) / den
    return slope * (min(c, c_up) + min(m, m_up)) + offset


def _qos_matrix(table: SpecTable, u, c, m):
    """Vectorized qos over (rows, N) arrays; cells with u == 0 are junk and
    must be masked by the caller (they always are, via multiplication by u)."""
    c_low = table.c0 + (table.cr - table.dc) * u
    c_up = table.c0 + (table.cr + table.dc) * u
    m_low = table.m0 + (table.mr - table.dm) * u
    m_up = table.m0 + (table.mr + table.dm) * u
    r_up = c_up + m_up
    r_low = c_low + m_low
    den = r_up - r_low
    safe = np.where(den > 0, den, 1.0)
    lin = ((table.qos_max - table.qos_min) / safe) * (np.minimum(c, c_up) + np.minimum(m, m_up)) \
        + (table.qos_min * r_up - table.qos_max * r_low) / safe
    inside = np.where(den > 0, lin, table.qos_max)
    out = np.where((c > c_up) & (m > m_up), table.qos_max, inside)
    return np.where((c < c_low) | (m < m_low), 0.0, out)


# ---------------------------------------------------------------------------
# per-instance cost pieces

def resize_latency(costs: CostParams, c_new, c_old, m_new, m_old) -> float:
    return abs(c_new - c_old) * costs.d_rc + abs(m_new - m_old) * costs.d_rm


def deployment_latency(costs: CostParams, c_old, c_new) -> float:
    return costs.d_db if (c_old == 0 and c_new > 0) else 0.0


def offload_latency(costs: CostParams, m_up_cloud: float, rate: float) -> float:
    """Round-trip transfer delay of the per-user payload over the cloud link."""
    return 2.0 * m_up_cloud * costs.unit_b / rate


def instance_latency(state: AllocationState, k: int, j: int,
                     costs: CostParams, rate: float) -> float:
    """User-scaled latency of instance (k, j) relative to the prior epoch."""
    u = int(state.users[k, j])
    if k == state.cloud:
        return u * offload_latency(costs, state.mem[k, j], rate)
    dep = deployment_latency(costs, state.cpu_prev[k, j], state.cpu[k, j])
    rez = resize_latency(costs, state.cpu[k, j], state.cpu_prev[k, j],
                         state.mem[k, j], state.mem_prev[k, j])
    return u * (dep + rez)


def instance_financial(state: AllocationState, k: int, j: int,
                       costs: CostParams) -> float:
    """Rental plus activation money for instance (k, j); idle instances pay
    for one user so that unused deployments are never free."""
    if state.cpu[k, j] <= 0:
        return 0.0
    u_eff = max(int(state.users[k, j]), 1)
    n = state.n_vnfs
    if k == state.cloud:
        newly = 1.0 if state.cpu_prev[k, j] == 0 else 0.0
        return u_eff * (newly * costs.c_c0 + state.mem[k, j] * costs.c_cv)
    active = state.cpu[k].sum() > 0
    newly = active and not state.server_active_prev[k]
    share = (costs.c_i0 / n if newly else 0.0) + (costs.c_iv / n if active else 0.0)
    return u_eff * (state.cpu[k, j] * costs.c_rp + state.mem[k, j] * costs.c_rm + share)


def sla_cost(spec: VnfSpec, qos_value: float, u: int) -> float:
    """Per-user penalty below the QoS floor minus the delivered QoS, scaled by users."""
    if u == 0:
        return 0.0
    miss = 1.0 if qos_value < spec.qos_min else 0.0
    return (spec.gamma_sla * miss - qos_value) * u


def instance_cost(state: AllocationState, k: int, j: int, costs: CostParams,
                  specs, rate: float) -> float:
    """Weighted latency + SLA + financial cost of one instance per user."""
    table = _as_table(specs)
    spec = table.specs[j]
    u = int(state.users[k, j])
    lat = instance_latency(state, k, j, costs, rate)
    fin = instance_financial(state, k, j, costs)
    if u == 0:
        sla = 0.0
    elif k == state.cloud:
        sla = sla_cost(spec, spec.qos_max, u)
    else:
        sla = sla_cost(spec, qos(spec, u, state.cpu[k, j], state.mem[k, j]), u)
    return (costs.w1 * lat + costs.w3 * sla + costs.w2 * fin) / max(u, 1)


def cost_components(state: AllocationState, table: SpecTable,
                    costs: CostParams, rate: float):
    """(latency, financial, sla, weighted numerator) matrices over all rows."""
    kk = state.k_servers
    u = state.users.astype(np.float64)
    cpu, mem = state.cpu, state.mem

    delta = np.abs(cpu[:kk] - state.cpu_prev[:kk]) * costs.d_rc \
        + np.abs(mem[:kk] - state.mem_prev[:kk]) * costs.d_rm
    fresh = (state.cpu_prev[:kk] == 0) & (cpu[:kk] > 0)
    lat = np.empty_like(cpu)
    lat[:kk] = u[:kk] * (fresh * costs.d_db + delta)
    lat[kk] = u[kk] * (2.0 * mem[kk] * costs.unit_b / rate)

    deployed = cpu > 0
    u_eff = np.where(deployed, np.maximum(u, 1.0), 0.0)
    active = cpu[:kk].sum(axis=1) > 0
    newly = active & ~state.server_active_prev
    share = (newly * (costs.c_i0 / state.n_vnfs) + active * (costs.c_iv / state.n_vnfs))
    fin = np.empty_like(cpu)
    fin[:kk] = u_eff[:kk] * (cpu[:kk] * costs.c_rp + mem[:kk] * costs.c_rm + share[:, None])
    newly_off = (state.cpu_prev[kk] == 0) & (cpu[kk] > 0)
    fin[kk] = u_eff[kk] * (newly_off * costs.c_c0 + mem[kk] * costs.c_cv)

    sla = np.empty_like(cpu)
    q_srv = _qos_matrix(table, u[:kk], cpu[:kk], mem[:kk])
    sla[:kk] = (table.gamma_sla * (q_srv < table.qos_min) - q_srv) * u[:kk]
    sla[kk] = -table.qos_max * u[kk]  # offloaded users always see the QoS ceiling

    num = costs.w1 * lat + costs.w3 * sla + costs.w2 * fin
    return lat, fin, sla, num


def network_cost(state: AllocationState, costs: CostParams, specs, rate: float) -> float:
    """Total weighted cost of every instance, normalized by the user count."""
    table = _as_table(specs)
    _, _, _, num = cost_components(state, table, costs, rate)
    return float(num.sum() / max(int(state.users.sum()), 1))


def agent_cost(inst_cost: float, net_cost: float, beta: float, gamma_max: float) -> float:
    """Training cost: blended instance + network cost squashed into [-1, 1]."""
    return float(np.clip((inst_cost + beta * net_cost) / gamma_max, -1.0, 1.0))


# ---------------------------------------------------------------------------
# traffic sampling

def sample_rate_block(spec: VnfSpec, rng: np.random.Generator) -> float:
    """Arrival rate for the next block: Gaussian truncated at zero."""
    return max(float(rng.normal(spec.mu_arr, spec.sigma_arr)), 0.0)


def sample_arrivals(lambdas: np.ndarray, slot_t: float, rng: np.random.Generator) -> np.ndarray:
    """Poisson request counts for one slot, one draw per VNF."""
    return rng.poisson(np.asarray(lambdas, dtype=np.float64) * slot_t)


def sample_cloud_rate(traffic: TrafficConfig, rng: np.random.Generator) -> float:
    """Cloud link rate for one slot: Gaussian floored at r_min."""
    return max(float(rng.normal(traffic.mu_r, traffic.sigma_r)), traffic.r_min)


def apply_departures(state: AllocationState, specs, rng: np.random.Generator) -> np.ndarray:
    """End-of-slot geometric service: each user leaves w.p. 1 - p_stay.

    Returns the per-(row, vnf) leaver counts. Cloud rows are rebooked to the
    per-user upper bounds for the remaining users, or terminated at zero."""
    table = _as_table(specs)
    leavers = rng.binomial(state.users, 1.0 - table.p_stay)
    state.users -= leavers
    _refresh_cloud(state, table)
    return leavers


def _refresh_cloud(state: AllocationState, table: SpecTable):
    kk = state.cloud
    u = state.users[kk].astype(np.float64)
    live = u > 0
    state.cpu[kk] = np.where(live, table.c0 + (table.cr + table.dc) * u, 0.0)
    state.mem[kk] = np.where(live, table.m0 + (table.mr + table.dm) * u, 0.0)


# ---------------------------------------------------------------------------
# environment

class VnfEnv:
    """Slotted orchestration environment driven by an agent callback."""

    def __init__(self, pool: PoolConfig, specs, costs: CostParams,
                 traffic: TrafficConfig, seed=0, beta: float = 0.2,
                 gamma_max: float = 100.0):
        specs = list(specs)
        if len(specs) != pool.n_vnfs:
            raise ValueError("len(specs) must equal pool.n_vnfs")
        if [s.id for s in specs] != list(range(pool.n_vnfs)):
            raise ValueError("vnf ids must be 0..n_vnfs-1 in order")
        self.pool = pool
        self.costs = costs
        self.traffic_cfg = traffic
        self.table = SpecTable(specs)
        self.specs = self.table.specs
        self.beta = beta
        self.gamma_max = gamma_max
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        traffic_ss, depart_ss = ss.spawn(2)
        # separate streams so departure bookkeeping never shifts the traffic trace
        self.rng_traffic = np.random.default_rng(traffic_ss)
        self.rng_departures = np.random.default_rng(depart_ss)
        self.state = AllocationState(pool.k_servers, pool.n_vnfs)
        self.lambdas = np.zeros(pool.n_vnfs)
        self.cur: EpochTraffic | None = None
        self.epoch = 0
        self._rate_scale = max(traffic.mu_r + 3.0 * traffic.sigma_r, traffic.r_min)

    @property
    def cloud_index(self) -> int:
        return self.pool.k_servers

    @property
    def n_targets(self) -> int:
        return self.pool.k_servers + 1

    @property
    def feature_length(self) -> int:
        k, n = self.pool.k_servers, self.pool.n_vnfs
        return n + n + (k + 1) * n + k * n + k * n + 1 + n

    def encode_state(self, vnf: int, traffic: EpochTraffic | None = None) -> np.ndarray:
        """Normalized feature vector for one pending request."""
        cur = traffic if traffic is not None else self.cur
        if cur is None:
            raise ValueError("no epoch traffic available; advance an epoch first")
        k, n = self.pool.k_servers, self.pool.n_vnfs
        st = self.state
        out = np.empty(self.feature_length)
        pos = 0
        out[pos:pos + n] = cur.arrivals / USER_SCALE
        pos += n
        out[pos:pos + n] = (st.cpu > 0).any(axis=0)
        pos += n
        m = (k + 1) * n
        out[pos:pos + m] = st.users.reshape(-1) / USER_SCALE
        pos += m
        m = k * n
        out[pos:pos + m] = st.cpu[:k].reshape(-1) / self.pool.rho_max
        pos += m
        out[pos:pos + m] = st.mem[:k].reshape(-1) / self.pool.eta_max
        pos += m
        out[pos] = cur.cloud_rate / self._rate_scale
        pos += 1
        out[pos:pos + n] = 0.0
        out[pos + vnf] = 1.0
        return out

    def _admit_cloud(self, j: int):
        st = self.state
        st.users[st.cloud, j] += 1
        spec = self.specs[j]
        u = int(st.users[st.cloud, j])
        _, c_up, _, m_up = resource_range(spec, u)
        st.cpu[st.cloud, j] = c_up
        st.mem[st.cloud, j] = m_up

    def apply_action(self, vnf: int, action: ParamAction,
                     assign_user: bool = True) -> StepOutcome:
        """Apply one placement decision; infeasible requests fall through to
        the cloud at the worst training cost."""
        pool = self.pool
        if not 0 <= vnf < pool.n_vnfs:
            raise ValueError(f"unknown vnf index {vnf}")
        t = action.target
        if not 0 <= t <= pool.k_servers:
            raise ValueError(f"action target {t} outside 0..{pool.k_servers}")
        st = self.state
        infeasible = False
        if t == st.cloud:
            # offload carries no parameters; an idle visit leaves the cloud alone
            if assign_user:
                self._admit_cloud(vnf)
        else:
            new_c = st.cpu[t, vnf] + action.d_cpu
            new_m = st.mem[t, vnf] + action.d_mem
            row_c = st.cpu[t].sum() - st.cpu[t, vnf] + new_c
            row_m = st.mem[t].sum() - st.mem[t, vnf] + new_m
            new_u = int(st.users[t, vnf]) + (1 if assign_user else 0)
            ok = (new_c >= 0 and new_m >= 0
                  and row_c <= pool.rho_max and row_m <= pool.eta_max
                  and not (new_u > 0 and new_c == 0))
            if ok:
                st.cpu[t, vnf] = new_c
                st.mem[t, vnf] = new_m
                if assign_user:
                    st.users[t, vnf] = new_u
            else:
                infeasible = True
                if assign_user:
                    self._admit_cloud(vnf)

        rate = self.cur.cloud_rate
        _, _, _, num = cost_components(st, self.table, self.costs, rate)
        if infeasible:
            where = st.cloud if assign_user else t
        else:
            where = t
        ic = float(num[where, vnf] / max(int(st.users[where, vnf]), 1))
        nc = float(num.sum() / max(int(st.users.sum()), 1))
        psi = 1.0 if infeasible else agent_cost(ic, nc, self.beta, self.gamma_max)
        return StepOutcome(psi, infeasible, ic, nc, self.encode_state(vnf))

    def _serve(self, j: int, policy, assign_user: bool) -> StepRecord:
        s = self.encode_state(j)
        action = policy(s, j, self.state, assign_user)
        out = self.apply_action(j, action, assign_user)
        return StepRecord(s, action, out.cost_psi, out.next_state_features,
                          out.infeasible, assign_user)

    def advance_epoch(self, policy, keep_snapshot: bool = False) -> EpochSummary:
        """Run one slot: sample traffic, serve every request (idle VNFs get a
        single no-user visit), collect metrics, then apply departures.

        policy(features, vnf, state, has_user) -> ParamAction
        """
        if self.epoch % self.traffic_cfg.t_max == 0:
            self.lambdas = np.array(
                [sample_rate_block(s, self.rng_traffic) for s in self.specs])
        arrivals = sample_arrivals(self.lambdas, self.traffic_cfg.slot_t, self.rng_traffic)
        rate = sample_cloud_rate(self.traffic_cfg, self.rng_traffic)
        self.cur = EpochTraffic(arrivals=arrivals, lambdas=self.lambdas.copy(),
                                cloud_rate=rate, epoch=self.epoch)
        order = self.rng_traffic.permutation(self.pool.n_vnfs)

        records = []
        for j in order:
            count = int(arrivals[j])
            if count == 0:
                records.append(self._serve(int(j), policy, False))
            else:
                for _ in range(count):
                    records.append(self._serve(int(j), policy, True))

        metrics = self._epoch_metrics(records, rate)
        snapshot = (self.state.copy(), rate) if keep_snapshot else None
        apply_departures(self.state, self.table, self.rng_departures)
        self.state.snapshot_prev()
        self.epoch += 1
        return EpochSummary(metrics, records, snapshot)

    def _epoch_metrics(self, records, rate: float) -> EpochMetrics:
        st = self.state
        k = self.pool.k_servers
        lat, fin, sla, num = cost_components(st, self.table, self.costs, rate)
        total_u = int(st.users.sum())
        du = max(total_u, 1)
        return EpochMetrics(
            epoch=self.epoch,
            network_cost=float(num.sum() / du),
            latency_per_user=float(lat.sum() / du),
            financial_per_user=float(fin.sum() / du),
            sla_per_user=float(sla.sum() / du),
            cpu_util=float(st.cpu[:k].sum() / (k * self.pool.rho_max)),
            mem_util=float(st.mem[:k].sum() / (k * self.pool.eta_max)),
            cloud_fraction=float(st.users[st.cloud].sum() / du),
            active_users=total_u,
            mean_reward=float(np.mean([-r.cost_psi for r in records])),
        )
