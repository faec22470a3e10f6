"""DC optimal power flow as a parametric LP.

Network data comes from a MATPOWER-format case file (a documented subset of
it) or from a small JSON schema. The optimization variable is the active
power of each in-service generator; load deviations ``omega`` (in MW, one
entry per bus with nonzero load) enter the right-hand sides only:

    minimize    c @ p
    subject to  sum(p - d + S omega) == 0
                pmin <= p <= pmax
                fmin <= PTDF (H p - d + S omega) <= fmax

Internally everything is per unit on ``base_mva``; costs are $/MWh so the
objective comes out in $/h.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DisconnectedNetwork,
    ParseError,
    SingularSusceptance,
    UnbalancedInjection,
    UnsupportedFeature,
)
from .lp_core import LpInstance
from .parametric import ParametricProgram

log = logging.getLogger(__name__)

ZERO_ROW_TOL = 1e-12


@dataclass(frozen=True)
class Bus:
    id: int
    load_mw: float


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin_mw: float
    pmax_mw: float
    cost_per_mwh: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance_pu: float
    rate_mw: float  # 0 means unlimited


@dataclass(frozen=True)
class Network:
    buses: tuple
    generators: tuple
    branches: tuple
    base_mva: float = 100.0
    slack_bus: int = 1
    name: str = ""
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for attr in ("buses", "generators", "branches", "warnings"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bus ids")
        known = set(ids)
        if self.slack_bus not in known:
            raise ValueError(f"slack bus {self.slack_bus} does not exist")
        for k, g in enumerate(self.generators):
            if g.bus not in known:
                raise ValueError(f"generator {k} references missing bus {g.bus}")
            if g.pmin_mw > g.pmax_mw:
                raise ValueError(f"generator {k} has pmin > pmax")
        for k, br in enumerate(self.branches):
            if br.from_bus not in known or br.to_bus not in known:
                raise ValueError(f"branch {k} references a missing bus")
            if br.rate_mw < 0:
                raise ValueError(f"branch {k} has a negative rating")
        if not self.base_mva > 0:
            raise ValueError("base_mva must be positive")
        if len(self.buses) > 1:
            idx = self.bus_index
            rows = [idx[b.from_bus] for b in self.branches]
            cols = [idx[b.to_bus] for b in self.branches]
            graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), len(ids)))
            ncomp, _ = connected_components(graph, directed=False)
            if ncomp != 1:
                raise DisconnectedNetwork(f"branch graph has {ncomp} components")

    @property
    def bus_index(self) -> dict:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def loads_mw(self) -> np.ndarray:
        return np.array([b.load_mw for b in self.buses], dtype=float)

    def uncertain_buses(self) -> list:
        """Positions (in bus order) of buses whose load is perturbed."""
        return [i for i, b in enumerate(self.buses) if b.load_mw != 0.0]

    def to_json(self) -> str:
        doc = {
            "base_mva": self.base_mva,
            "slack_bus": self.slack_bus,
            "buses": [{"id": b.id, "load_mw": b.load_mw} for b in self.buses],
            "generators": [
                {"bus": g.bus, "pmin_mw": g.pmin_mw, "pmax_mw": g.pmax_mw,
                 "cost_per_mwh": g.cost_per_mwh}
                for g in self.generators
            ],
            "branches": [
                {"from": br.from_bus, "to": br.to_bus, "reactance_pu": br.reactance_pu,
                 "rate_mw": br.rate_mw}
                for br in self.branches
            ],
        }
        if self.name:
            doc["name"] = self.name
        return json.dumps(doc, indent=2)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------- parsing

_BLOCK_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_SCALAR = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^\[;]+?)\s*;?\s*$")
_NAME = re.compile(r"^\s*function\s+mpc\s*=\s*(\w+)")

# column positions (0-based) in the MATPOWER matrices
BUS_I, BUS_TYPE, PD = 0, 1, 2
GEN_BUS, GEN_STATUS, PMAX, PMIN = 0, 7, 8, 9
F_BUS, T_BUS, BR_X, RATE_A, TAP, SHIFT, BR_STATUS = 0, 1, 3, 5, 8, 9, 10
MODEL, NCOST, COST = 0, 3, 4


def _matpower_blocks(text):
    scalars, blocks = {}, {}
    name = ""
    current, rows = None, None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0]
        if current is None:
            m = _NAME.match(line)
            if m:
                name = m.group(1)
                continue
            m = _BLOCK_START.match(line)
            if m:
                current, rows = m.group(1), []
                blocks[current] = rows
                line = m.group(2)
                col_offset = m.start(2)
            else:
                m = _SCALAR.match(line)
                if m:
                    scalars[m.group(1)] = (m.group(2).strip("'\" "), lineno)
                continue
        else:
            col_offset = 0
        closed = "]" in line
        body = line.split("]", 1)[0]
        pos = col_offset
        for chunk in body.split(";"):
            tokens = []
            for tm in re.finditer(r"[^\s,]+", chunk):
                tok = tm.group(0)
                try:
                    tokens.append(float(tok))
                except ValueError:
                    raise ParseError(f"mpc.{current}: cannot read number {tok!r}",
                                     lineno, pos + tm.start() + 1) from None
            if tokens:
                rows.append((tokens, lineno))
            pos += len(chunk) + 1
        if closed:
            current = None
    if current is not None:
        raise ParseError(f"mpc.{current} block is not terminated")
    return name, scalars, blocks


def _need(blocks, key):
    if key not in blocks:
        raise ParseError(f"missing mpc.{key} matrix")
    return blocks[key]


def _parse_matpower(text: str) -> Network:
    name, scalars, blocks = _matpower_blocks(text)
    if "baseMVA" not in scalars:
        raise ParseError("missing mpc.baseMVA")
    try:
        base = float(scalars["baseMVA"][0])
    except ValueError:
        raise ParseError("mpc.baseMVA is not a number", scalars["baseMVA"][1]) from None
    warnings = []

    buses, slack = [], None
    for k, (row, ln) in enumerate(_need(blocks, "bus")):
        if len(row) < 3:
            raise ParseError(f"mpc.bus row {k + 1} has {len(row)} columns, need at least 3", ln)
        btype = int(row[BUS_TYPE])
        if btype == 4:
            raise UnsupportedFeature(f"mpc.bus row {k + 1}: isolated buses (type 4) are not supported")
        if btype == 3:
            if slack is not None:
                raise UnsupportedFeature("more than one reference bus (type 3)")
            slack = int(row[BUS_I])
        buses.append(Bus(int(row[BUS_I]), float(row[PD])))
    if slack is None:
        raise ParseError("no reference bus (type 3) in mpc.bus")
    known = {b.id for b in buses}

    gen_rows = _need(blocks, "gen")
    cost_rows = _need(blocks, "gencost")
    if len(cost_rows) < len(gen_rows):
        raise ParseError(f"mpc.gencost has {len(cost_rows)} rows for {len(gen_rows)} generators")
    gens = []
    for k, (row, ln) in enumerate(gen_rows):
        if len(row) < 10:
            raise ParseError(f"mpc.gen row {k + 1} has {len(row)} columns, need at least 10", ln)
        if row[GEN_STATUS] <= 0:
            continue
        bus = int(row[GEN_BUS])
        if bus not in known:
            raise ParseError(f"mpc.gen row {k + 1} references missing bus {bus}", ln)
        crow, cln = cost_rows[k]
        if int(crow[MODEL]) != 2:
            raise UnsupportedFeature(f"mpc.gencost row {k + 1}: only polynomial costs (model 2) are supported")
        ncost = int(crow[NCOST])
        coeffs = crow[COST:COST + ncost]
        if len(coeffs) != ncost:
            raise ParseError(f"mpc.gencost row {k + 1} declares {ncost} coefficients", cln)
        linear = coeffs[-2] if ncost >= 2 else 0.0
        if ncost >= 3 and any(c != 0.0 for c in coeffs[:-2]):
            msg = f"generator {k + 1}: nonlinear cost terms dropped, using linear coefficient {linear:g}"
            warnings.append(msg)
            log.warning(msg)
        gens.append(Generator(bus, float(row[PMIN]), float(row[PMAX]), float(linear)))

    branches = []
    for k, (row, ln) in enumerate(_need(blocks, "branch")):
        if len(row) < 11:
            raise ParseError(f"mpc.branch row {k + 1} has {len(row)} columns, need at least 11", ln)
        f, t = int(row[F_BUS]), int(row[T_BUS])
        for b in (f, t):
            if b not in known:
                raise ParseError(f"mpc.branch row {k + 1} references missing bus {b}", ln)
        if row[BR_STATUS] <= 0:
            continue
        if row[SHIFT] != 0.0:
            raise UnsupportedFeature(f"mpc.branch row {k + 1}: phase shifters are not supported")
        x = float(row[BR_X])
        tap = float(row[TAP])
        if tap not in (0.0, 1.0):
            x *= tap
        branches.append(Branch(f, t, x, float(row[RATE_A])))

    return Network(buses, gens, branches, base, slack, name=name, warnings=tuple(warnings))


def _parse_json(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    try:
        buses = [Bus(int(b["id"]), float(b["load_mw"])) for b in doc["buses"]]
        known = {b.id for b in buses}
        gens = []
        for k, g in enumerate(doc["generators"]):
            if int(g["bus"]) not in known:
                raise ParseError(f"generators[{k}] references missing bus {g['bus']}")
            gens.append(Generator(int(g["bus"]), float(g["pmin_mw"]), float(g["pmax_mw"]),
                                  float(g["cost_per_mwh"])))
        branches = []
        for k, br in enumerate(doc["branches"]):
            for end in ("from", "to"):
                if int(br[end]) not in known:
                    raise ParseError(f"branches[{k}] references missing bus {br[end]}")
            branches.append(Branch(int(br["from"]), int(br["to"]), float(br["reactance_pu"]),
                                   float(br.get("rate_mw", 0.0))))
        return Network(buses, gens, branches, float(doc["base_mva"]), int(doc["slack_bus"]),
                       name=doc.get("name", ""))
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}") from None


def parse_network(text: str, format: str = "matpower") -> Network:
    """Read a network from MATPOWER-subset text (``"matpower"``) or JSON (``"json"``)."""
    fmt = format.lower()
    if fmt in ("matpower", "m", "matpowersubset"):
        return _parse_matpower(text)
    if fmt in ("json", "nativejson"):
        return _parse_json(text)
    raise ValueError(f"unknown network format {format!r}")


def load_network(path, format=None) -> Network:
    from pathlib import Path

    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "matpower"
    net = parse_network(path.read_text(), format)
    if not net.name:
        net = Network(net.buses, net.generators, net.branches, net.base_mva, net.slack_bus,
                      name=path.stem, warnings=net.warnings)
    return net


# ---------------------------------------------------------------- PTDF

@dataclass(frozen=True, eq=False)
class PtdfMatrix:
    entries: np.ndarray  # lines x buses
    slack_bus: int
    bus_ids: tuple

    def flows(self, injections) -> np.ndarray:
        return self.entries @ np.asarray(injections, dtype=float)


def _susceptances(network):
    x = np.array([br.reactance_pu for br in network.branches], dtype=float)
    if np.any(x == 0.0):
        raise SingularSusceptance("branch with zero reactance")
    return 1.0 / x


def build_ptdf(network: Network) -> PtdfMatrix:
    """Injection at each bus withdrawn at the slack bus, mapped to line flows."""
    idx = network.bus_index
    nb, nl = len(network.buses), len(network.branches)
    b = _susceptances(network)
    C = np.zeros((nl, nb))
    for k, br in enumerate(network.branches):
        C[k, idx[br.from_bus]] = 1.0
        C[k, idx[br.to_bus]] = -1.0
    Bf = b[:, None] * C
    Bbus = C.T @ Bf
    s = idx[network.slack_bus]
    keep = np.array([i for i in range(nb) if i != s], dtype=int)
    entries = np.zeros((nl, nb))
    if keep.size:
        Bred = Bbus[np.ix_(keep, keep)]
        if np.linalg.cond(Bred) > 1e12:
            raise SingularSusceptance("reduced susceptance matrix is numerically singular")
        entries[:, keep] = np.linalg.solve(Bred.T, Bf[:, keep].T).T
    entries.setflags(write=False)
    return PtdfMatrix(entries, network.slack_bus, tuple(idx))


def dc_power_flow(network: Network, injections) -> np.ndarray:
    """Line flows from angle equations for a balanced injection vector (bus order)."""
    p = np.asarray(injections, dtype=float).ravel()
    nb = len(network.buses)
    if p.size != nb:
        raise ValueError(f"{p.size} injections for {nb} buses")
    if abs(p.sum()) > 1e-9 * max(1.0, np.abs(p).sum()):
        raise UnbalancedInjection(f"injections sum to {p.sum():.3e}")
    idx = network.bus_index
    B = np.zeros((nb, nb))
    for br in network.branches:
        if br.reactance_pu == 0.0:
            raise SingularSusceptance("branch with zero reactance")
        y = 1.0 / br.reactance_pu
        i, j = idx[br.from_bus], idx[br.to_bus]
        B[i, i] += y
        B[j, j] += y
        B[i, j] -= y
        B[j, i] -= y
    s = idx[network.slack_bus]
    keep = [i for i in range(nb) if i != s]
    theta = np.zeros(nb)
    if keep:
        try:
            theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], p[keep])
        except np.linalg.LinAlgError:
            raise SingularSusceptance("reduced susceptance matrix is singular") from None
    return np.array([(theta[idx[br.from_bus]] - theta[idx[br.to_bus]]) / br.reactance_pu
                     for br in network.branches])


# ---------------------------------------------------------------- DC-OPF

class DcopfInstantiator:
    """Maps a load-deviation vector (MW) to the per-unit LP for that realization.

    Inequality rows, in order: generator lower limits, generator upper limits,
    line lower limits, line upper limits (limited lines only).
    """

    def __init__(self, cost, gen_lo, gen_hi, flow_coef, flow_lo, flow_hi, flow_omega, total_load):
        self.cost = cost
        n = cost.size
        self.n = n
        eye = np.eye(n)
        self.A = np.vstack([-eye, eye, -flow_coef, flow_coef])
        self.b0 = np.concatenate([-gen_lo, gen_hi, -flow_lo, flow_hi])
        nl = flow_coef.shape[0]
        # d b / d omega for the line rows; generator rows do not depend on omega
        self.B = np.vstack([np.zeros((2 * n, flow_omega.shape[1])), flow_omega, -flow_omega])
        self.eq = np.ones((1, n))
        self.total_load = total_load
        self.n_lines = nl

    def __call__(self, omega_pu):
        b = self.b0 + self.B @ omega_pu
        e = np.array([self.total_load - omega_pu.sum()])
        return LpInstance(self.cost, self.eq, e, self.A, b)


class _MwInstantiator:
    def __init__(self, inner, base):
        self.inner = inner
        self.base = base

    def __call__(self, omega_mw):
        return self.inner(np.asarray(omega_mw, dtype=float) / self.base)


class _ConstantFlowCheck:
    """Limits on lines whose flow does not depend on dispatch."""

    def __init__(self, base_flow, omega_map, lo, hi, base):
        self.base_flow, self.omega_map, self.lo, self.hi, self.base = base_flow, omega_map, lo, hi, base

    def __call__(self, omega_mw):
        f = self.base_flow + self.omega_map @ (np.asarray(omega_mw) / self.base)
        scale = np.maximum(1.0, np.maximum(np.abs(self.lo), np.abs(self.hi)))
        return bool(np.all((self.lo - f) / scale <= 1e-6) and np.all((f - self.hi) / scale <= 1e-6))


def build_dcopf(network: Network) -> ParametricProgram:
    """The DC-OPF family over load deviations on every bus with nonzero load."""
    base = network.base_mva
    ptdf = build_ptdf(network)
    idx = network.bus_index
    nb = len(network.buses)
    gens = network.generators
    n = len(gens)
    if n == 0:
        raise ValueError("network has no in-service generators")
    H = np.zeros((nb, n))
    for g, gen in enumerate(gens):
        H[idx[gen.bus], g] = 1.0
    unc = network.uncertain_buses()
    S = np.zeros((nb, len(unc)))
    S[unc, np.arange(len(unc))] = 1.0
    d = network.loads_mw / base

    limited = [k for k, br in enumerate(network.branches) if br.rate_mw > 0]
    Mlim = ptdf.entries[limited]
    coef = Mlim @ H
    movable = [r for r in range(len(limited)) if np.max(np.abs(coef[r]), initial=0.0) > ZERO_ROW_TOL]
    fixed = [r for r in range(len(limited)) if r not in movable]
    rate = np.array([network.branches[k].rate_mw for k in limited], dtype=float) / base

    md = Mlim @ d
    ms = Mlim @ S
    rows = movable
    inst = DcopfInstantiator(
        cost=np.array([g.cost_per_mwh for g in gens], dtype=float) * base,
        gen_lo=np.array([g.pmin_mw for g in gens], dtype=float) / base,
        gen_hi=np.array([g.pmax_mw for g in gens], dtype=float) / base,
        flow_coef=coef[rows],
        flow_lo=-rate[rows] + md[rows],
        flow_hi=rate[rows] + md[rows],
        flow_omega=ms[rows],
        total_load=float(d.sum()),
    )
    domain_check = None
    if fixed:
        domain_check = _ConstantFlowCheck(-md[fixed], ms[fixed], -rate[fixed], rate[fixed], base)

    labels = []
    for bound in ("min", "max"):
        labels += [f"gen{g}@bus{gen.bus}:{bound}" for g, gen in enumerate(gens)]
    for bound in ("min", "max"):
        for r in rows:
            br = network.branches[limited[r]]
            labels.append(f"line{limited[r]}({br.from_bus}-{br.to_bus}):{bound}")

    m = 2 * n + 2 * len(rows)
    return ParametricProgram(
        n=n,
        m=m,
        sample_dim=len(unc),
        instantiator=_MwInstantiator(inst, base),
        labels=tuple(labels),
        fingerprint=network.fingerprint(),
        domain_check=domain_check,
        metadata={
            "case": network.name,
            "base_mva": base,
            "limited_lines": [limited[r] for r in rows],
            "constant_flow_lines": [limited[r] for r in fixed],
            "uncertain_buses": [network.buses[i].id for i in unc],
        },
    )


def dispatch_mw(program: ParametricProgram, point) -> np.ndarray:
    return np.asarray(point, dtype=float) * program.metadata.get("base_mva", 1.0)
