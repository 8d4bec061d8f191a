"""Weight characteristics, Orlicz norms, and oscillation norms.

All characteristics are suprema over the cubes of one dyadic lattice.
Averages over a cube always use the normalized measure of that cube;
Lebesgue-style norms inside the fractional characteristic are the
unnormalized sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicLattice
from .space import DiscreteSpace


def conjugate_exponent(p: float) -> float:
    if p < 1:
        raise ValueError("conjugate exponent needs p >= 1")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class ExponentConfig:
    """Exponent bookkeeping for a multilinear fractional setup.

    The fractional order eta is pinned to sum(1/p_i) - 1/q; passing an
    explicit eta merely asserts it.  theta and beta are the derived
    exponents the sparse-bound proof runs on, q0 the endpoint target.
    """

    m: int
    p: tuple
    q: float
    eta: float | None = None
    p0: float = 1.0
    gamma: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        p = tuple(float(v) for v in self.p)
        object.__setattr__(self, "p", p)
        if len(p) != self.m:
            raise ValueError("p must list one exponent per slot")
        if any(v < 1 for v in p):
            raise ValueError("every p_i must be >= 1")
        if not self.q > 0:
            raise ValueError("q must be positive")
        if not (self.p0 > 0 and self.gamma > 0 and self.r > 0):
            raise ValueError("p0, gamma, r must be positive")
        derived = math.fsum(1.0 / v for v in p) - 1.0 / self.q
        if self.eta is None:
            object.__setattr__(self, "eta", derived)
        elif abs(self.eta - derived) > 1e-12:
            raise ValueError(
                f"eta={self.eta} inconsistent with exponents "
                f"(expected {derived})"
            )
        if not 0 <= self.eta < self.m:
            raise ValueError(f"eta={self.eta} must lie in [0, m)")

    @property
    def q0(self) -> float:
        return 1.0 / (self.m - self.eta)

    @property
    def theta(self) -> float:
        return min(self.q, self.gamma)

    @property
    def beta(self) -> float:
        return max(1.0 / self.theta,
                   max(conjugate_exponent(v) / self.q for v in self.p))

    def scaled(self, s: float) -> "ExponentConfig":
        """Exponents divided by s (slotwise p, q, gamma); eta recomputed."""
        return ExponentConfig(self.m, tuple(v / s for v in self.p),
                              self.q / s, gamma=self.gamma / s)


# -- averages ----------------------------------------------------------------

def avg(space: DiscreteSpace, members, f, p: float = 1.0) -> float:
    """Normalized p-average of |f| over a member set."""
    members = np.asarray(members, dtype=np.intp)
    mass = space.masses[members]
    vals = np.abs(np.asarray(f, dtype=np.float64)[members])
    mean = float(np.dot(vals**p, mass) / mass.sum())
    return mean ** (1.0 / p)


def weighted_avg(space: DiscreteSpace, members, f, sigma) -> float:
    """Average of f against the measure sigma d(mu), signed."""
    members = np.asarray(members, dtype=np.intp)
    smass = np.asarray(sigma, dtype=np.float64)[members] * space.masses[members]
    return float(np.dot(np.asarray(f, dtype=np.float64)[members], smass)
                 / smass.sum())


def geometric_mean(space: DiscreteSpace, members, w) -> float:
    members = np.asarray(members, dtype=np.intp)
    mass = space.masses[members]
    logs = np.log(np.asarray(w, dtype=np.float64)[members])
    return float(np.exp(np.dot(logs, mass) / mass.sum()))


def _check_weight(space: DiscreteSpace, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (space.n,):
        raise ValueError("weight must assign one value per point")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be positive and finite")
    return w


def _sup_over_cubes(lattice: DyadicLattice, per_cube, detail: bool):
    best_val, best_id = -math.inf, None
    for cube in lattice.cubes:
        v = per_cube(cube)
        if v > best_val:
            best_val, best_id = v, cube.cube_id
    if detail:
        return best_val, best_id
    return best_val


# -- joint characteristics ---------------------------------------------------

def fractional_apq_constant(lattice: DyadicLattice, weights, p, q,
                            u=None, detail: bool = False):
    """Fractional-class characteristic built from unnormalized norms.

    Per cube: mu(Q)^(eta - m) * ||u 1_Q||_{L^q} * prod_i
    ||(1/w_i) 1_Q||_{L^{p_i'}}, with the L^inf factor (p_i = 1) read as
    the max of 1/w_i on Q.  Default u is the product of the w_i.
    """
    sp = lattice.space
    ws = [_check_weight(sp, w) for w in weights]
    m = len(ws)
    p = [float(v) for v in p]
    u = np.prod(np.stack(ws), axis=0) if u is None else _check_weight(sp, u)
    eta = math.fsum(1.0 / v for v in p) - 1.0 / q
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        val = cube.mass ** (eta - m)
        val *= float(np.dot(u[mem] ** q, mass[mem])) ** (1.0 / q)
        for w, pi in zip(ws, p):
            pc = conjugate_exponent(pi)
            if math.isinf(pc):
                val *= float((1.0 / w[mem]).max())
            else:
                val *= float(np.dot(w[mem] ** (-pc), mass[mem])) ** (1.0 / pc)
        return val

    return _sup_over_cubes(lattice, per_cube, detail)


def joint_astar_constant(lattice: DyadicLattice, weights, p, q,
                         u=None, detail: bool = False):
    """Normalized-average characteristic of the weight vector.

    Per cube: <u>_Q * prod_i <w_i^(1 - p_i')>_Q^(q/p_i'); the p_i = 1
    factor degenerates to (min_Q w_i)^(-q).  Default u is
    prod_i w_i^(q/p_i).
    """
    sp = lattice.space
    ws = [_check_weight(sp, w) for w in weights]
    p = [float(v) for v in p]
    if u is None:
        u = np.prod(np.stack([w ** (q / pi) for w, pi in zip(ws, p)]), axis=0)
    else:
        u = _check_weight(sp, u)
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        mq = cube.mass
        val = float(np.dot(u[mem], mass[mem])) / mq
        for w, pi in zip(ws, p):
            pc = conjugate_exponent(pi)
            if math.isinf(pc):
                val *= float(w[mem].min()) ** (-q)
            else:
                dual_avg = float(np.dot(w[mem] ** (1.0 - pc), mass[mem])) / mq
                val *= dual_avg ** (q / pc)
        return val

    return _sup_over_cubes(lattice, per_cube, detail)


def astar_from_duals(lattice: DyadicLattice, u, sigmas, p, q,
                     detail: bool = False):
    """Same characteristic written on the dual weights sigma_i.

    Per cube: <u>_Q * prod_i <sigma_i>_Q^(q/p_i').  Coincides with
    joint_astar_constant when sigma_i = w_i^(1 - p_i').
    """
    sp = lattice.space
    u = _check_weight(sp, u)
    sg = [_check_weight(sp, s) for s in sigmas]
    p = [float(v) for v in p]
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        mq = cube.mass
        val = float(np.dot(u[mem], mass[mem])) / mq
        for s, pi in zip(sg, p):
            pc = conjugate_exponent(pi)
            expo = 0.0 if math.isinf(pc) else q / pc
            val *= (float(np.dot(s[mem], mass[mem])) / mq) ** expo
        return val

    return _sup_over_cubes(lattice, per_cube, detail)


def muckenhoupt_ap(lattice: DyadicLattice, w, p: float,
                   detail: bool = False):
    """Classical p-characteristic; p = 1 uses the essential infimum."""
    sp = lattice.space
    w = _check_weight(sp, w)
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        mq = cube.mass
        mean = float(np.dot(w[mem], mass[mem])) / mq
        if p == 1:
            return mean / float(w[mem].min())
        pc = conjugate_exponent(p)
        dual_avg = float(np.dot(w[mem] ** (1.0 - pc), mass[mem])) / mq
        return mean * dual_avg ** (p - 1.0)

    return _sup_over_cubes(lattice, per_cube, detail)


def dual_weight(w, p: float) -> np.ndarray:
    if p <= 1:
        raise ValueError("dual weight needs p > 1")
    w = np.asarray(w, dtype=np.float64)
    return w ** (1.0 - conjugate_exponent(p))


# -- Fujii-Wilson and Hruscev style constants --------------------------------

def _subtree_ids(lattice: DyadicLattice, cube_id: int) -> list:
    out = [cube_id]
    stack = [cube_id]
    while stack:
        kids = lattice.cube(stack.pop()).children
        out.extend(kids)
        stack.extend(kids)
    return out


def _restricted_maximal(lattice: DyadicLattice, cube_id: int,
                        g: np.ndarray) -> np.ndarray:
    """Pointwise max of |g|-averages over sub-cubes of one cube."""
    sp = lattice.space
    out = np.zeros(sp.n)
    absg = np.abs(g)
    for cid in _subtree_ids(lattice, cube_id):
        cube = lattice.cube(cid)
        mem = cube.members
        mean = float(np.dot(absg[mem], sp.masses[mem])) / cube.mass
        out[mem] = np.maximum(out[mem], mean)
    return out


def fujii_wilson_constant(lattice: DyadicLattice, weights, p, q,
                          detail: bool = False):
    """Maximal-function form of the joint limiting characteristic.

    Per cube Q the inner maximal runs over sub-cubes of Q only:
    (int_Q prod_i M_Q(w_i 1_Q)^(q/p_i)) / (int_Q prod_i w_i^(q/p_i)).
    """
    sp = lattice.space
    ws = [_check_weight(sp, w) for w in weights]
    expo = [q / float(v) for v in p]
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        num = np.ones(len(mem))
        den = np.ones(len(mem))
        for w, e in zip(ws, expo):
            num *= _restricted_maximal(lattice, cube.cube_id, w)[mem] ** e
            den *= w[mem] ** e
        return float(np.dot(num, mass[mem]) / np.dot(den, mass[mem]))

    return _sup_over_cubes(lattice, per_cube, detail)


def fujii_wilson_single(lattice: DyadicLattice, w, detail: bool = False):
    return fujii_wilson_constant(lattice, [w], (1.0,), 1.0, detail=detail)


def hruscev_constant(lattice: DyadicLattice, weights, p, q,
                     detail: bool = False):
    """Exponential-mean form: prod_i (<w_i> exp<log 1/w_i>)^(q/p_i)."""
    sp = lattice.space
    ws = [_check_weight(sp, w) for w in weights]
    expo = [q / float(v) for v in p]
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        val = 1.0
        for w, e in zip(ws, expo):
            mean = float(np.dot(w[mem], mass[mem])) / cube.mass
            val *= (mean / geometric_mean(sp, mem, w)) ** e
        return val

    return _sup_over_cubes(lattice, per_cube, detail)


def hruscev_single(lattice: DyadicLattice, w, detail: bool = False):
    return hruscev_constant(lattice, [w], (1.0,), 1.0, detail=detail)


def component_wilson_constant(lattice: DyadicLattice, u, sigmas, p, q,
                              gamma: float, i: int,
                              detail: bool = False):
    """Slot-i maximal-form constant entering commutator bounds.

    Equal to 1 when q <= gamma; otherwise a ratio of integrals of
    products of restricted maximal functions of u and the other duals,
    with exponents driven by (p_i/gamma)' and t = q/gamma.
    """
    if q <= gamma:
        return (1.0, None) if detail else 1.0
    sp = lattice.space
    u = _check_weight(sp, u)
    sg = [_check_weight(sp, s) for s in sigmas]
    p = [float(v) for v in p]
    if p[i] <= gamma:
        raise ValueError("slot constant needs p_i > gamma when q > gamma")
    t = q / gamma
    pc = conjugate_exponent(p[i] / gamma)
    e_u = pc / conjugate_exponent(t)
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        num = _restricted_maximal(lattice, cube.cube_id, u)[mem] ** e_u
        den = u[mem] ** e_u
        for j, s in enumerate(sg):
            if j == i:
                continue
            e_j = pc / (p[j] / gamma)
            num = num * _restricted_maximal(lattice, cube.cube_id, s)[mem] ** e_j
            den = den * s[mem] ** e_j
        return float(np.dot(num, mass[mem]) / np.dot(den, mass[mem]))

    return _sup_over_cubes(lattice, per_cube, detail)


def component_hruscev_constant(lattice: DyadicLattice, u, sigmas, p, q,
                               gamma: float, i: int,
                               detail: bool = False):
    """Slot-i exponential-mean constant entering commutator bounds."""
    sp = lattice.space
    u = _check_weight(sp, u)
    sg = [_check_weight(sp, s) for s in sigmas]
    p = [float(v) for v in p]
    if p[i] <= 1:
        raise ValueError("slot constant needs p_i > 1")
    pic = conjugate_exponent(p[i])
    e_u = pic * max(1.0 / gamma - 1.0 / q, 0.0)
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        mean_u = float(np.dot(u[mem], mass[mem])) / cube.mass
        val = (mean_u / geometric_mean(sp, mem, u)) ** e_u
        si = sg[i]
        mean_si = float(np.dot(si[mem], mass[mem])) / cube.mass
        ratio_i = mean_si / geometric_mean(sp, mem, si)
        for j in range(len(sg)):
            if j == i:
                continue
            val *= ratio_i ** (pic / p[j])
        return val

    return _sup_over_cubes(lattice, per_cube, detail)


# -- oscillation norms -------------------------------------------------------

def bmo_norm(lattice: DyadicLattice, b, weight=None,
             detail: bool = False):
    """Mean oscillation against an optional reference weight.

    Per cube: (1/nu(Q)) sum_Q |b - <b>_Q| mu, with <b>_Q the plain
    mu-average and nu(Q) the weight's mass (mu(Q) when no weight).
    """
    sp = lattice.space
    b = np.asarray(b, dtype=np.float64)
    nu = None if weight is None else _check_weight(sp, weight)
    mass = sp.masses

    def per_cube(cube):
        mem = cube.members
        mean = float(np.dot(b[mem], mass[mem])) / cube.mass
        osc = float(np.dot(np.abs(b[mem] - mean), mass[mem]))
        denom = cube.mass if nu is None else float(np.dot(nu[mem], mass[mem]))
        return osc / denom

    return _sup_over_cubes(lattice, per_cube, detail)


# -- Orlicz machinery --------------------------------------------------------

@dataclass(frozen=True)
class YoungFunction:
    """Vectorized convex gauge t -> Phi(t), Phi(0) = 0."""

    kind: str
    r: float = 1.0
    s: float = 1.0
    ell: float = 0.0

    def value(self, t):
        t = np.asarray(t, dtype=np.float64)
        with np.errstate(over="ignore"):
            if self.kind == "identity":
                return t
            if self.kind == "llogl":
                logplus = np.log(np.maximum(t, 1.0))
                return t * (1.0 + logplus) ** self.r
            if self.kind == "expl":
                return np.expm1(t ** self.s)
            if self.kind == "power_log":
                logplus = np.log(np.maximum(t, 1.0))
                return t ** self.r * (1.0 + logplus ** (self.r * self.ell))
            if self.kind == "llogl_conjugate":
                return np.where(t <= 1.0, 0.0,
                                np.where(t <= 2.0, t - 1.0,
                                         np.exp(np.minimum(t, 700.0) - 2.0)))
        raise ValueError(f"unknown Young function kind: {self.kind}")

    def compose(self, other: "YoungFunction"):
        return lambda t: self.value(other.value(t))


def young_identity() -> YoungFunction:
    return YoungFunction("identity")


def young_llogl(r: float) -> YoungFunction:
    return YoungFunction("llogl", r=r)


def young_expl(s: float) -> YoungFunction:
    return YoungFunction("expl", s=s)


def young_power_log(r: float, ell: float) -> YoungFunction:
    return YoungFunction("power_log", r=r, ell=ell)


def young_llogl_conjugate() -> YoungFunction:
    """Convex conjugate of t(1 + log+ t): flat to 1, linear to 2, then
    exponential."""
    return YoungFunction("llogl_conjugate")


def luxemburg_norm(space: DiscreteSpace, members, f, phi: YoungFunction,
                   tol: float = 1e-10) -> float:
    """inf{lam > 0 : normalized mean of Phi(|f|/lam) over Q is <= 1}."""
    members = np.asarray(members, dtype=np.intp)
    vals = np.abs(np.asarray(f, dtype=np.float64)[members])
    mass = space.masses[members]
    total = float(mass.sum())
    if float(vals.max(initial=0.0)) == 0.0:
        return 0.0

    def mean_phi(lam: float) -> float:
        return float(np.dot(phi.value(vals / lam), mass)) / total

    hi = 1.0
    steps = 0
    while mean_phi(hi) > 1.0:
        hi *= 2.0
        steps += 1
        if steps > 2000:
            raise ArithmeticError("no finite bracket for the gauge norm")
    lo = hi / 2.0
    steps = 0
    while mean_phi(lo) <= 1.0:
        hi = lo
        lo /= 2.0
        steps += 1
        if steps > 2000:
            raise ArithmeticError("gauge norm bracket collapsed")
    while (hi - lo) > tol * hi:
        mid = 0.5 * (lo + hi)
        if mean_phi(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


# -- weight presets ----------------------------------------------------------

def make_weight(space: DiscreteSpace, spec: str) -> np.ndarray:
    """Named weight families: const, step, power:a, random:seed."""
    n = space.n
    if spec == "const":
        return np.ones(n)
    if spec == "step":
        w = np.ones(n)
        w[n // 2:] = 2.0
        return w
    if spec.startswith("power:"):
        a = float(spec.split(":", 1)[1])
        return ((np.arange(n) + 1.0) / n) ** a
    if spec.startswith("random:"):
        seed = int(spec.split(":", 1)[1])
        return np.exp(np.random.default_rng(seed).uniform(-1.0, 1.0, size=n))
    raise ValueError(f"unknown weight preset: {spec}")
