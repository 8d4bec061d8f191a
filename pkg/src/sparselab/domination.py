"""Stopping-time construction of sparse domination certificates.

The construction walks one dyadic lattice downward from a root cube.
At each node it calibrates a threshold multiplier alpha so that the bad
set (points where either the pointwise product of oscillation-modified
arguments or a local truncated grand maximal exceeds alpha times its
enlarged-ball reference level) occupies at most 1/(4 C_mu0) of the
node.  Maximal subcubes charged by the bad set become the next nodes;
what each node keeps is its sparse witness.  The emitted family is
audited against its declared sparseness and against the pointwise
domination it certifies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import (
    AdjacentSystems,
    Cube,
    SparseFamily,
    WitnessSelectionError,
    adjacent_cover,
    select_witnesses,
    verify_sparse,
)
from .operators import (
    MultiIndexPair,
    ball_mass_kernel,
    commutator_integral,
    sparse_higher_order,
    truncated_grand_maximal_local,
)
from .space import DiscreteSpace
from .weights import avg

ALPHA_FACTOR_CAP = 2.0 ** 20


class DominationError(RuntimeError):
    def __init__(self, message, cube_id=None):
        super().__init__(message)
        self.cube_id = cube_id


def _arrays(fs, n):
    out = []
    for f in fs:
        a = np.asarray(f, dtype=np.float64)
        if a.shape != (n,):
            raise ValueError("argument must assign one value per point")
        out.append(a)
    return out


def _signed_mean(space, members, f) -> float:
    mass = space.masses[members]
    return float(np.dot(np.asarray(f, dtype=np.float64)[members], mass)
                 / mass.sum())


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class DominationConfig:
    """Construction constants; every field must satisfy its defining
    inequality exactly, with the two exponents minimal."""

    j0: int
    jtilde0: int
    c_jtilde0: float
    alpha: float = 1.0
    target_delta: float = 0.5
    a0: float = 1.0
    c_adj: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.target_delta <= 1:
            raise ValueError("target_delta must lie in (0, 1]")
        need = max(3.0 * self.a0, 2.0 * self.a0 * self.c_adj)
        if not 2.0 ** self.jtilde0 > need:
            raise ValueError("2^jtilde0 must exceed max(3 a0, 2 a0 c_adj)")
        if self.jtilde0 > 0 and 2.0 ** (self.jtilde0 - 1) > need:
            raise ValueError("jtilde0 is not minimal")
        if self.c_jtilde0 != 2.0 ** (self.jtilde0 + 2) * self.a0:
            raise ValueError("c_jtilde0 must equal 2^(jtilde0+2) a0")
        if self.j0 <= self.jtilde0:
            raise ValueError("j0 must exceed jtilde0")
        if not 2.0 ** self.j0 > 4.0 * self.a0:
            raise ValueError("2^j0 must exceed 4 a0")
        if self.j0 > self.jtilde0 + 1 and 2.0 ** (self.j0 - 1) > 4.0 * self.a0:
            raise ValueError("j0 is not minimal")


def derive_config(space: DiscreteSpace, systems: AdjacentSystems,
                  alpha: float = 1.0,
                  target_delta: float = 0.5) -> DominationConfig:
    a0 = space.a0
    need = max(3.0 * a0, 2.0 * a0 * systems.c_adj)
    jt = 0
    while 2.0 ** jt <= need:
        jt += 1
    j0 = jt + 1
    while 2.0 ** j0 <= 4.0 * a0:
        j0 += 1
    return DominationConfig(j0=j0, jtilde0=jt,
                            c_jtilde0=2.0 ** (jt + 2) * a0,
                            alpha=alpha, target_delta=target_delta,
                            a0=a0, c_adj=systems.c_adj)


# -- certificate -------------------------------------------------------------

@dataclass
class DominationCertificate:
    families: list
    constant: float
    max_ratio: float
    alpha: float
    truncated: bool
    residual_bound: float
    pair: MultiIndexPair
    eta: float
    per_point: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)

    def ratio_summary(self) -> dict:
        ratio = np.asarray(self.per_point.get("ratio", []), dtype=np.float64)
        if ratio.size == 0:
            return {"min": 0.0, "median": 0.0, "max": 0.0}
        return {"min": float(ratio.min()),
                "median": float(np.median(ratio)),
                "max": float(ratio.max())}

    def to_descriptor(self, audit: bool = False) -> dict:
        fams = []
        for fam in self.families:
            fams.append({
                "system": fam.lattice.system,
                "delta": fam.delta,
                "cube_ids": list(fam.cube_ids),
                "witnesses": {str(cid): np.asarray(w).tolist()
                              for cid, w in fam.witnesses.items()},
            })
        desc = {
            "families": fams,
            "constant": self.constant,
            "max_ratio": self.max_ratio,
            "alpha": self.alpha,
            "truncated": self.truncated,
            "residual_bound": self.residual_bound,
            "eta": self.eta,
            "k": list(self.pair.k),
            "tau_ell": list(self.pair.tau_ell),
            "ratio_summary": self.ratio_summary(),
            "coverage": self.coverage,
        }
        if audit:
            desc["per_point"] = {
                key: np.asarray(val).tolist()
                for key, val in self.per_point.items()
            }
        return desc


# -- the two sides of the certificate ----------------------------------------

def _normalized_orders(pair: MultiIndexPair) -> list[int]:
    # slots outside tau_ell carry no symbol, so their order is read as 0
    return [pair.k[i] if i in pair.tau_ell else 0 for i in range(pair.m)]


def certificate_lhs(space: DiscreteSpace, fs, symbols,
                    pair: MultiIndexPair, eta: float,
                    kernel: np.ndarray | None = None) -> np.ndarray:
    powers = _normalized_orders(pair)
    return np.abs(commutator_integral(space, fs, symbols, powers, eta,
                                      kernel))


def certificate_rhs(space: DiscreteSpace, families, fs, symbols,
                    pair: MultiIndexPair, eta: float,
                    r: float = 1.0) -> np.ndarray:
    """Sum of higher-order sparse forms over all symbol subsets and all
    componentwise splits t <= k, weighted by binomial coefficients."""
    orders = _normalized_orders(pair)
    out = np.zeros(space.n)
    subsets = []
    for size in range(len(pair.tau_ell) + 1):
        subsets.extend(itertools.combinations(pair.tau_ell, size))
    for fam in families:
        for tau in subsets:
            for tvec in itertools.product(*[range(k + 1) for k in orders]):
                weight = 1.0
                for ki, ti in zip(orders, tvec):
                    weight *= math.comb(ki, ti)
                sub = MultiIndexPair(k=tuple(orders), t=tvec, tau=tau,
                                     tau_ell=pair.tau_ell)
                out += weight * sparse_higher_order(fam, fs, symbols, sub,
                                                    eta=eta, r=r)
    return out


# -- level sets --------------------------------------------------------------

def _node_profiles(space, fs, symbols, pair, eta, r, region, base_center,
                   base_radius, cfg, systems):
    """Per t-vector data the alpha loop compares against thresholds.

    Returns (profiles, big_mass) where each profile is a tuple
    (pointwise values on the region, grand-maximal values on the
    region, reference product over the enlarged ball).
    """
    big = space.ball(base_center, cfg.c_jtilde0 * base_radius)
    _, ref_cube = adjacent_cover(systems, big)
    cut = np.zeros(space.n)
    cut[big.members] = 1.0
    mu_big = space.mass_of(big.members)
    means = {i: _signed_mean(space, ref_cube.members, symbols[i])
             for i in pair.tau_ell}
    orders = _normalized_orders(pair)
    profiles = []
    for tvec in itertools.product(*[range(k + 1) for k in orders]):
        mods = []
        for i in range(pair.m):
            if tvec[i]:
                mods.append((symbols[i] - means[i]) ** tvec[i] * fs[i])
            else:
                mods.append(fs[i])
        ref = 1.0
        for g in mods:
            ref *= avg(space, big.members, g, r)
        point = np.ones(len(region))
        for g in mods:
            point *= np.abs(g[region])
        grand = truncated_grand_maximal_local(
            space, [g * cut for g in mods], eta, cfg.c_jtilde0,
            base_center, base_radius)
        profiles.append((point, grand[region], ref))
    return profiles, mu_big


def _bad_set(profiles, mu_big, eta, r, alpha, region, n):
    mask = np.zeros(n, dtype=bool)
    mu_pow = mu_big ** (eta / r)
    for point, grand, ref in profiles:
        hit = (point > alpha * ref) | (grand > alpha * mu_pow * ref)
        mask[region[hit]] = True
    return mask


# -- stopping-cube selection -------------------------------------------------

def _stopping_cubes(lattice, cube: Cube, bad: np.ndarray,
                    lam: float) -> list[Cube]:
    """Maximal proper subcubes charged above the lambda fraction."""
    sp = lattice.space
    out = []
    stack = [lattice.cube(cid) for cid in reversed(cube.children)]
    while stack:
        cand = stack.pop()
        mem = cand.members
        inter = float(sp.masses[mem[bad[mem]]].sum())
        if inter > lam * cand.mass:
            out.append(cand)
        elif inter > 0.0:
            stack.extend(lattice.cube(cid) for cid in reversed(cand.children))
    out.sort(key=lambda c: (c.gen, c.index))
    return out


# -- the construction --------------------------------------------------------

def cz_construct(space: DiscreteSpace, systems: AdjacentSystems, fs,
                 symbols, pair: MultiIndexPair, eta: float,
                 cfg: DominationConfig | None = None
                 ) -> DominationCertificate:
    """Build and self-verify a sparse domination certificate.

    fs and symbols hold one array per slot; pair.k and pair.tau_ell
    drive the construction (pair.t and pair.tau are enumerated
    internally).  The oscillation split is evaluated at r = 1.
    """
    fs = _arrays(fs, space.n)
    symbols = _arrays(symbols, space.n)
    if len(fs) != pair.m or len(symbols) != pair.m:
        raise ValueError("one argument and one symbol per slot required")
    if cfg is None:
        cfg = derive_config(space, systems)
    r = 1.0
    coverage = coverage_audit(space, systems, cfg)
    if any(not np.any(f) for f in fs):
        zero = np.zeros(space.n)
        return DominationCertificate(
            families=[], constant=0.0, max_ratio=0.0, alpha=cfg.alpha,
            truncated=False, residual_bound=0.0, pair=pair, eta=eta,
            per_point={"lhs": zero, "rhs": zero.copy(),
                       "ratio": zero.copy()},
            coverage=coverage)

    radius0 = float(space.metric[0].max())
    root_ball = space.ball(0, radius0)
    sys_idx, root_cube = adjacent_cover(systems, root_ball)
    lattice = systems.lattices[sys_idx]
    cmu0 = lattice.cmu0()
    lam = 1.0 / (2.0 * cmu0)
    kernel = ball_mass_kernel(space)
    needed = sum(pair.k[i] for i in pair.tau_ell)
    truncated = needed > lattice.depth
    residual = 0.0

    cube_ids: list[int] = []
    witnesses: dict[int, np.ndarray] = {}
    final_alpha = cfg.alpha

    # depth-first, children in (gen, index) order for determinism
    stack: list[tuple[Cube, int, float, float, int]] = [
        (root_cube, root_ball.center, root_ball.radius, cfg.alpha, 0)]
    while stack:
        cube, bc, br, alpha, depth = stack.pop()
        if depth > lattice.depth:
            # unreachable for faithful inputs; bound the abandoned term
            big = space.ball(bc, cfg.c_jtilde0 * br)
            cut = np.zeros(space.n)
            cut[big.members] = 1.0
            tail = certificate_lhs(space, [f * cut for f in fs], symbols,
                                   pair, eta, kernel)
            residual += float(tail[cube.members].max())
            truncated = True
            continue
        region = cube.members
        profiles, mu_big = _node_profiles(
            space, fs, symbols, pair, eta, r, region, bc, br, cfg, systems)
        target = cube.mass / (4.0 * cmu0)
        while True:
            bad = _bad_set(profiles, mu_big, eta, r, alpha, region, space.n)
            if float(space.masses[bad].sum()) <= target:
                break
            if alpha * 2.0 > cfg.alpha * ALPHA_FACTOR_CAP:
                raise DominationError(
                    f"alpha escalation exceeded 2^20 at cube "
                    f"{cube.cube_id} (generation {cube.gen}, "
                    f"index {cube.index})", cube_id=cube.cube_id)
            alpha *= 2.0
        final_alpha = max(final_alpha, alpha)
        picks = _stopping_cubes(lattice, cube, bad, lam)
        budget = math.fsum(p.mass for p in picks)
        if budget > 0.5 * cube.mass * (1 + 1e-12):
            raise DominationError(
                f"stopping cubes exceed half the mass of cube "
                f"{cube.cube_id}", cube_id=cube.cube_id)
        covered = np.zeros(space.n, dtype=bool)
        for p in picks:
            covered[p.members] = True
        if np.any(bad & ~covered):
            raise DominationError(
                f"bad set escapes the stopping cubes of cube "
                f"{cube.cube_id}", cube_id=cube.cube_id)
        cube_ids.append(cube.cube_id)
        witnesses[cube.cube_id] = region[~covered[region]]
        nominal = lattice.big_a1 * lattice.delta ** np.arange(
            lattice.depth + 1)
        for p in reversed(picks):
            stack.append((p, p.center, float(nominal[p.gen]),
                          alpha, depth + 1))

    family = SparseFamily(lattice, cube_ids, witnesses, cfg.target_delta)
    report = verify_sparse(family)
    if not report.ok:
        raise DominationError(
            f"emitted family fails its own sparseness audit: "
            f"{report.violations[:3]}")

    lhs = certificate_lhs(space, fs, symbols, pair, eta, kernel)
    rhs = certificate_rhs(space, [family], fs, symbols, pair, eta, r)
    pos = rhs > 0.0
    ratio = np.where(pos, lhs / np.where(pos, rhs, 1.0), 0.0)
    stray = lhs[~pos]
    if stray.size and float(stray.max()) > 1e-12 * max(1.0, float(lhs.max())):
        raise DominationError("operator mass where the certificate "
                              "vanishes; domination unattainable")
    max_ratio = float(ratio.max()) if ratio.size else 0.0
    return DominationCertificate(
        families=[family], constant=max_ratio, max_ratio=max_ratio,
        alpha=final_alpha, truncated=truncated, residual_bound=residual,
        pair=pair, eta=eta,
        per_point={"lhs": lhs, "rhs": rhs, "ratio": ratio},
        coverage=coverage)


# -- verification ------------------------------------------------------------

def verify_domination(cert: DominationCertificate, lhs, rhs) -> dict:
    """Pointwise check of lhs <= constant * rhs wherever rhs > 0, and
    lhs = 0 wherever rhs = 0; report-valued."""
    lhs = np.asarray(lhs, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if lhs.shape != rhs.shape:
        raise ValueError("lhs and rhs must share a shape")
    scale = max(1.0, float(np.abs(lhs).max(initial=0.0)),
                cert.constant * float(np.abs(rhs).max(initial=0.0)))
    tol = 1e-12 * scale
    violations = []
    for x in range(lhs.size):
        if rhs[x] > 0.0:
            if lhs[x] > cert.constant * rhs[x] + tol:
                violations.append({"point": x, "lhs": float(lhs[x]),
                                   "bound": float(cert.constant * rhs[x])})
        elif lhs[x] > tol:
            violations.append({"point": x, "lhs": float(lhs[x]),
                               "bound": 0.0})
    pos = rhs > 0.0
    realized = float((lhs[pos] / rhs[pos]).max()) if np.any(pos) else 0.0
    return {"pass": not violations, "violations": violations,
            "constant": cert.constant, "max_ratio": realized,
            "n_points": int(lhs.size)}


# -- step-1 coverage audit ---------------------------------------------------

def coverage_audit(space: DiscreteSpace, systems: AdjacentSystems,
                   cfg: DominationConfig) -> dict:
    """Dilated-ball coverage of the space plus annulus cube covers.

    Checks that the doubled balls 2^j B0 exhaust the space and that the
    greedy adjacent-cube cover of each annulus keeps its overlap below
    the declared bound; reports the realized overlap.
    """
    dists = space.realized_distances(0)
    if dists.size == 0:
        return {"union_ok": True, "levels": 0, "overlap": 0,
                "declared_bound": 2 * (2 * cfg.j0 + 1), "ok": True}
    r0 = float(dists.min())
    rmax = float(dists.max())
    levels = 0
    while r0 * 2.0 ** levels < rmax:
        levels += 1
    union_ok = bool(space.ball(0, r0 * 2.0 ** levels).members.size == space.n)
    counts = np.zeros(space.n, dtype=np.intp)
    prev = space.ball(0, r0).members
    chosen = []
    for j in range(levels):
        nxt = space.ball(0, r0 * 2.0 ** (j + 1)).members
        ann = np.setdiff1d(nxt, prev, assume_unique=True)
        prev = nxt
        done = np.zeros(space.n, dtype=bool)
        for x in ann:
            if done[x]:
                continue
            small = space.ball(int(x), r0 * 2.0 ** (j + 1 - cfg.j0))
            _, cube = adjacent_cover(systems, small)
            chosen.append(cube)
            done[cube.members] = True
            counts[cube.members] += 1
    overlap = int(counts.max(initial=0))
    declared = 2 * (2 * cfg.j0 + 1)
    return {"union_ok": union_ok, "levels": levels, "overlap": overlap,
            "declared_bound": declared,
            "ok": union_ok and overlap <= declared}


# -- sparse augmentation -----------------------------------------------------

def augment_sparse(family: SparseFamily, b) -> tuple[SparseFamily, dict]:
    """Close a sparse family under symbol-oscillation stopping cubes.

    For each cube Q the maximal subcubes R with <|b - b_Q|>_R above
    2 C_mu0 <|b - b_Q|>_Q join the family, iterated to a fixpoint.  The
    result is gamma/(2(gamma+1))-sparse (gamma the input sparseness)
    with freshly selected witnesses, and the table reports per cube the
    oscillation, the budget, the added subcubes, and the empirical
    constant of the pointwise oscillation bound.
    """
    lat = family.lattice
    sp = lat.space
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (sp.n,):
        raise ValueError("symbol must assign one value per point")
    gamma = family.delta
    new_delta = gamma / (2.0 * (gamma + 1.0))
    cmu0 = lat.cmu0()
    ids = sorted(set(family.cube_ids),
                 key=lambda cid: (lat.cube(cid).gen, lat.cube(cid).index))
    present = set(ids)
    rows = []
    added_all = []
    queue = list(ids)
    while queue:
        cid = queue.pop(0)
        cube = lat.cube(cid)
        b_q = _signed_mean(sp, cube.members, b)
        osc = avg(sp, cube.members, b - b_q, 1.0)
        budget = 2.0 * cmu0 * osc
        picked = []
        stack = [lat.cube(c) for c in reversed(cube.children)]
        while stack:
            cand = stack.pop()
            val = avg(sp, cand.members, b - b_q, 1.0)
            if val > budget:
                picked.append(cand.cube_id)
            else:
                stack.extend(lat.cube(c) for c in reversed(cand.children))
        fresh = [c for c in picked if c not in present]
        for c in fresh:
            present.add(c)
            queue.append(c)
            added_all.append(c)
        rows.append({"cube_id": cid, "osc": osc, "budget": budget,
                     "added": fresh})
    new_ids = sorted(present,
                     key=lambda cid: (lat.cube(cid).gen,
                                      lat.cube(cid).index))
    try:
        augmented = select_witnesses(lat, new_ids, new_delta)
    except WitnessSelectionError as exc:
        raise WitnessSelectionError(
            f"augmented family cannot reach sparseness {new_delta}: {exc}",
            cube_id=exc.cube_id) from exc

    oscs = {}
    for cid in new_ids:
        cube = lat.cube(cid)
        b_q = _signed_mean(sp, cube.members, b)
        oscs[cid] = avg(sp, cube.members, b - b_q, 1.0)
    empirical = 0.0
    vacuous = True
    for row in rows:
        row["max_ratio"] = 0.0
    ratio_by_cube = {}
    for cid in new_ids:
        cube = lat.cube(cid)
        inside = set(cube.members.tolist())
        b_q = _signed_mean(sp, cube.members, b)
        num = np.abs(b[cube.members] - b_q)
        denom = np.zeros(sp.n)
        for other in new_ids:
            oc = lat.cube(other)
            if oc.gen >= cube.gen and int(oc.members[0]) in inside:
                denom[oc.members] += oscs[other]
        dvals = denom[cube.members]
        live = dvals > 0.0
        if np.any(num > 1e-14 * max(1.0, float(np.abs(b).max()))):
            vacuous = False
        if np.any(live):
            ratio = float((num[live] / dvals[live]).max())
        else:
            ratio = 0.0
        ratio_by_cube[cid] = ratio
        empirical = max(empirical, ratio)
    for row in rows:
        row["max_ratio"] = ratio_by_cube.get(row["cube_id"], 0.0)
    if vacuous:
        empirical = 0.0
    table = {"empirical_c": empirical, "vacuous": vacuous,
             "delta": new_delta, "rows": rows, "added": added_all}
    return augmented, table
