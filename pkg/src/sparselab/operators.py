"""Sparse forms, maximal functions, and fractional integrals.

Every operator evaluates pointwise on the whole space and returns a
length-n array.  Sparse forms run over the cubes of a sparse family;
maximal functions run over lattice cubes or metric balls; the
fractional integral sums the multilinear ball-mass kernel.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._accel import (
    frac_kernel_m1,
    frac_kernel_m2,
    frac_kernel_m3,
    scatter_add_cubes,
)
from .dyadic import DyadicLattice, SparseFamily
from .space import DiscreteSpace
from .weights import avg, luxemburg_norm, young_llogl


@dataclass(frozen=True)
class MultiIndexPair:
    """Oscillation orders per slot: outer power k_i, inner split t_i.

    tau lists the slots carrying pointwise oscillation factors,
    tau_ell the (super)set of slots carrying a symbol at all.  Indices
    are 0-based.
    """

    k: tuple
    t: tuple
    tau: tuple
    tau_ell: tuple

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        t = tuple(int(v) for v in self.t)
        tau = tuple(sorted(int(v) for v in self.tau))
        tau_ell = tuple(sorted(int(v) for v in self.tau_ell))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "tau_ell", tau_ell)
        if len(t) != len(k):
            raise ValueError("k and t must have equal length")
        if any(v < 0 for v in k):
            raise ValueError("orders k_i must be nonnegative")
        if any(not 0 <= ti <= ki for ti, ki in zip(t, k)):
            raise ValueError("need 0 <= t_i <= k_i in every slot")
        if not set(tau) <= set(tau_ell):
            raise ValueError("tau must be contained in tau_ell")
        m = len(k)
        if any(not 0 <= i < m for i in tau_ell):
            raise ValueError("slot indices out of range")

    @property
    def m(self) -> int:
        return len(self.k)


def _as_arrays(fs, n):
    out = []
    for f in fs:
        a = np.asarray(f, dtype=np.float64)
        if a.shape != (n,):
            raise ValueError("argument must assign one value per point")
        out.append(a)
    return out


def _apply_sparse(family: SparseFamily, coeffs) -> np.ndarray:
    lat = family.lattice
    out = np.zeros(lat.space.n)
    if not family.cube_ids:
        return out
    members = [lat.cube(cid).members for cid in family.cube_ids]
    flat = np.concatenate(members)
    offsets = np.zeros(len(members) + 1, dtype=np.int64)
    np.cumsum([len(mm) for mm in members], out=offsets[1:])
    scatter_add_cubes(out, flat, offsets, np.asarray(coeffs, dtype=np.float64))
    return out


# -- sparse forms ------------------------------------------------------------

def sparse_operator(family: SparseFamily, fs, eta: float = 0.0,
                    p0: float = 1.0, gamma: float = 1.0) -> np.ndarray:
    """Basic form: (sum_Q [mu(Q)^eta prod_i <f_i>_{Q,p0}]^gamma 1_Q)^(1/gamma)."""
    sp = family.lattice.space
    fs = _as_arrays(fs, sp.n)
    coeffs = []
    for cid in family.cube_ids:
        cube = family.lattice.cube(cid)
        prod = cube.mass ** eta
        for f in fs:
            prod *= avg(sp, cube.members, f, p0)
        coeffs.append(prod ** gamma)
    return _apply_sparse(family, coeffs) ** (1.0 / gamma)


def _symbol_mean(sp, members, b):
    return float(np.dot(b[members], sp.masses[members])
                 / sp.masses[members].sum())


def sparse_first_order(family: SparseFamily, fs, symbols, tau, tau_ell,
                       eta: float = 0.0, r: float = 1.0) -> np.ndarray:
    """First-order oscillation form.

    Slots in tau carry |b_i(x) - <b_i>_Q| outside the average, slots in
    tau_ell minus tau carry the oscillation inside the average, the
    rest enter through plain r-averages.
    """
    sp = family.lattice.space
    fs = _as_arrays(fs, sp.n)
    symbols = _as_arrays(symbols, sp.n)
    tau = sorted(set(tau))
    tau_ell = sorted(set(tau_ell))
    if not set(tau) <= set(tau_ell):
        raise ValueError("tau must be contained in tau_ell")
    out = np.zeros(sp.n)
    for cid in family.cube_ids:
        cube = family.lattice.cube(cid)
        mem = cube.members
        coeff = cube.mass ** (eta / r)
        means = {i: _symbol_mean(sp, mem, symbols[i]) for i in tau_ell}
        for i, f in enumerate(fs):
            if i in tau or i not in tau_ell:
                coeff *= avg(sp, mem, f, r)
            else:
                coeff *= avg(sp, mem, (symbols[i] - means[i]) * f, r)
        point = np.full(len(mem), coeff)
        for i in tau:
            point *= np.abs(symbols[i][mem] - means[i])
        out[mem] += point
    return out


def sparse_higher_order(family: SparseFamily, fs, symbols,
                        pair: MultiIndexPair, eta: float = 0.0,
                        r: float = 1.0) -> np.ndarray:
    """Higher-order form with split oscillation powers.

    Slots in pair.tau contribute |b_i(x) - <b_i>_Q|^(k_i - t_i) times
    the r-average of |f_i (b_i - <b_i>_Q)^t_i|; every other slot enters
    through a plain r-average.
    """
    sp = family.lattice.space
    fs = _as_arrays(fs, sp.n)
    symbols = _as_arrays(symbols, sp.n)
    out = np.zeros(sp.n)
    for cid in family.cube_ids:
        cube = family.lattice.cube(cid)
        mem = cube.members
        coeff = cube.mass ** (eta / r)
        means = {i: _symbol_mean(sp, mem, symbols[i]) for i in pair.tau}
        for i, f in enumerate(fs):
            if i in pair.tau:
                osc = (symbols[i] - means[i]) ** pair.t[i]
                coeff *= avg(sp, mem, f * osc, r)
            else:
                coeff *= avg(sp, mem, f, r)
        point = np.full(len(mem), coeff)
        for i in pair.tau:
            point *= np.abs(symbols[i][mem] - means[i]) ** \
                (pair.k[i] - pair.t[i])
        out[mem] += point
    return out


def sparse_endpoint(family: SparseFamily, fs, tau, eta: float = 0.0,
                    r: float = 1.0) -> np.ndarray:
    """Endpoint form: slots outside tau enter through the L(logL)^r
    gauge norm of |f|^r, taken to the power 1/r."""
    sp = family.lattice.space
    fs = _as_arrays(fs, sp.n)
    tau = set(tau)
    phi = young_llogl(r)
    coeffs = []
    for cid in family.cube_ids:
        cube = family.lattice.cube(cid)
        mem = cube.members
        coeff = cube.mass ** (eta / r)
        for i, f in enumerate(fs):
            if i in tau:
                coeff *= avg(sp, mem, f, r)
            else:
                coeff *= luxemburg_norm(sp, mem, np.abs(f) ** r,
                                        phi) ** (1.0 / r)
        coeffs.append(coeff)
    return _apply_sparse(family, coeffs)


# -- lattice maximal functions -----------------------------------------------

def dyadic_maximal(lattice: DyadicLattice, f, weight=None) -> np.ndarray:
    """sup over cubes containing x of the (weight-)average of |f|."""
    sp = lattice.space
    absf = np.abs(np.asarray(f, dtype=np.float64))
    w = None if weight is None else np.asarray(weight, dtype=np.float64)
    out = np.zeros(sp.n)
    for cube in lattice.cubes:
        mem = cube.members
        if w is None:
            mean = float(np.dot(absf[mem], sp.masses[mem])) / cube.mass
        else:
            wm = w[mem] * sp.masses[mem]
            mean = float(np.dot(absf[mem], wm) / wm.sum())
        out[mem] = np.maximum(out[mem], mean)
    return out


def endpoint_maximal(lattice: DyadicLattice, fs, tau, eta: float = 0.0,
                     r: float = 1.0) -> np.ndarray:
    """sup over cubes of mu(Q)^(eta/r) prod_tau <f_i>_Q prod_rest of the
    L(logL)^r gauge norm."""
    sp = lattice.space
    fs = _as_arrays(fs, sp.n)
    tau = set(tau)
    phi = young_llogl(r)
    out = np.zeros(sp.n)
    for cube in lattice.cubes:
        mem = cube.members
        val = cube.mass ** (eta / r)
        for i, f in enumerate(fs):
            if i in tau:
                val *= avg(sp, mem, f, 1.0)
            else:
                val *= luxemburg_norm(sp, mem, f, phi)
        out[mem] = np.maximum(out[mem], val)
    return out


def orlicz_maximal(lattice: DyadicLattice, fs, phis,
                   eta: float = 0.0) -> np.ndarray:
    """sup over cubes of mu(Q)^eta prod_i of gauge norms of f_i."""
    sp = lattice.space
    fs = _as_arrays(fs, sp.n)
    if len(phis) != len(fs):
        raise ValueError("one gauge per argument required")
    out = np.zeros(sp.n)
    for cube in lattice.cubes:
        mem = cube.members
        val = cube.mass ** eta
        for f, phi in zip(fs, phis):
            val *= luxemburg_norm(sp, mem, f, phi)
        out[mem] = np.maximum(out[mem], val)
    return out


def sharp_maximal_dyadic(lattice: DyadicLattice, f,
                         delta: float | None = None) -> np.ndarray:
    """Mean-oscillation maximal; with delta the |f|^delta variant."""
    if delta is not None:
        base = sharp_maximal_dyadic(lattice,
                                    np.abs(np.asarray(f)) ** delta)
        return base ** (1.0 / delta)
    sp = lattice.space
    f = np.asarray(f, dtype=np.float64)
    out = np.zeros(sp.n)
    for cube in lattice.cubes:
        mem = cube.members
        mean = float(np.dot(f[mem], sp.masses[mem])) / cube.mass
        osc = float(np.dot(np.abs(f[mem] - mean), sp.masses[mem])) \
            / cube.mass
        out[mem] = np.maximum(out[mem], osc)
    return out


def power_maximal_dyadic(lattice: DyadicLattice, f,
                         delta: float) -> np.ndarray:
    return dyadic_maximal(lattice, np.abs(np.asarray(f)) ** delta) \
        ** (1.0 / delta)


# -- ball maximal functions --------------------------------------------------

def fractional_maximal(space: DiscreteSpace, fs, eta: float = 0.0,
                       centered: bool = True) -> np.ndarray:
    """sup over balls of mu(B)^(eta - m) prod_i int_B |f_i| dmu.

    Centered mode takes balls around x only (all realized radii,
    including zero); non-centered mode takes every ball containing x.
    """
    n = space.n
    fs = _as_arrays(fs, n)
    m = len(fs)
    fm = [np.abs(f) * space.masses for f in fs]
    out = np.zeros(n)
    for y in range(n):
        d = space.metric[y]
        order = np.argsort(d, kind="stable")
        dsorted = d[order]
        pmass = np.cumsum(space.masses[order])
        pf = [np.cumsum(f[order]) for f in fm]
        ends = np.flatnonzero(np.diff(dsorted) > 0)
        ends = np.append(ends, n - 1)
        vals = pmass[ends] ** (eta - m)
        for f in pf:
            vals = vals * f[ends]
        if centered:
            out[y] = float(vals.max())
        else:
            for e, v in zip(ends, vals):
                mem = order[:e + 1]
                out[mem] = np.maximum(out[mem], v)
    return out


def ball_maximal(space: DiscreteSpace, f,
                 centered: bool = True) -> np.ndarray:
    return fractional_maximal(space, [f], 0.0, centered)


def power_maximal(space: DiscreteSpace, f, delta: float,
                  centered: bool = True) -> np.ndarray:
    return ball_maximal(space, np.abs(np.asarray(f)) ** delta,
                        centered) ** (1.0 / delta)


# -- fractional integral and commutators -------------------------------------

def ball_mass_kernel(space: DiscreteSpace) -> np.ndarray:
    """K[x, y] = mu of the closed ball around x through y."""
    n = space.n
    K = np.empty((n, n))
    for x in range(n):
        K[x] = space.ball_mass(x, space.metric[x])
    return K


def fractional_integral(space: DiscreteSpace, fs, eta: float,
                        kernel: np.ndarray | None = None) -> np.ndarray:
    """Multilinear sum of (sum_i mu B(x, d(x,y_i)))^(eta-m) prod f_i(y_i).

    Signed arguments are allowed; supports m in {1, 2, 3}.
    """
    n = space.n
    fs = _as_arrays(fs, n)
    m = len(fs)
    if not 1 <= m <= 3:
        raise ValueError("fractional integral supports 1 to 3 arguments")
    K = ball_mass_kernel(space) if kernel is None else kernel
    ws = [f * space.masses for f in fs]
    expo = eta - m
    if m == 1:
        return frac_kernel_m1(K, ws[0], expo)
    if m == 2:
        return frac_kernel_m2(K, ws[0], ws[1], expo)
    return frac_kernel_m3(K, ws[0], ws[1], ws[2], expo)


def commutator_integral(space: DiscreteSpace, fs, symbols, powers,
                        eta: float,
                        kernel: np.ndarray | None = None) -> np.ndarray:
    """Signed oscillation commutator of the fractional integral.

    Slot i carries (b_i(x) - b_i(y_i))^powers[i]; power 0 leaves the
    slot untouched.  Evaluated exactly through binomial expansion into
    plain fractional integrals.
    """
    n = space.n
    fs = _as_arrays(fs, n)
    symbols = _as_arrays(symbols, n)
    powers = [int(v) for v in powers]
    if len(powers) != len(fs) or len(symbols) != len(fs):
        raise ValueError("one symbol and one power per slot required")
    if any(v < 0 for v in powers):
        raise ValueError("powers must be nonnegative")
    K = ball_mass_kernel(space) if kernel is None else kernel
    out = np.zeros(n)
    for jvec in itertools.product(*[range(b + 1) for b in powers]):
        scale = 1.0
        outer = np.ones(n)
        mods = []
        for i, (b, j) in enumerate(zip(powers, jvec)):
            scale *= math.comb(b, j) * (-1.0) ** j
            if b - j:
                outer = outer * symbols[i] ** (b - j)
            mods.append(fs[i] * symbols[i] ** j if j else fs[i])
        out += scale * outer * fractional_integral(space, mods, eta, K)
    return out


# -- truncated grand maximal -------------------------------------------------

def truncated_grand_maximal(space: DiscreteSpace, fs, eta: float,
                            dilation: float) -> np.ndarray:
    """sup over balls B containing x of the max over B of the
    fractional integral of the arguments cut off outside dilation*B."""
    n = space.n
    fs = _as_arrays(fs, n)
    K = ball_mass_kernel(space)
    out = np.zeros(n)
    for y in range(n):
        d = space.metric[y]
        for r in space.realized_distances(y):
            ball = np.flatnonzero(d <= r)
            keep = d > dilation * r
            if not np.any(keep):
                continue
            cuts = [f * keep for f in fs]
            vals = fractional_integral(space, cuts, eta, K)
            peak = float(np.abs(vals[ball]).max())
            out[ball] = np.maximum(out[ball], peak)
    return out


def truncated_grand_maximal_local(space: DiscreteSpace, fs, eta: float,
                                  dilation: float, base_center: int,
                                  base_radius: float) -> np.ndarray:
    """Local variant: balls B inside the base ball, integrand restricted
    to dilation*B0 minus dilation*B."""
    n = space.n
    fs = _as_arrays(fs, n)
    K = ball_mass_kernel(space)
    base = space.ball(base_center, base_radius)
    base_set = np.zeros(n, dtype=bool)
    base_set[base.members] = True
    big0 = space.metric[base_center] <= dilation * base_radius
    out = np.zeros(n)
    for y in base.members:
        d = space.metric[y]
        for r in space.realized_distances(y):
            ball = np.flatnonzero(d <= r)
            if not np.all(base_set[ball]):
                continue
            keep = big0 & (d > dilation * r)
            if not np.any(keep):
                continue
            cuts = [f * keep for f in fs]
            vals = fractional_integral(space, cuts, eta, K)
            peak = float(np.abs(vals[ball]).max())
            out[ball] = np.maximum(out[ball], peak)
    return out
