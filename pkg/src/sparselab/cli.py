"""Command-line front end.

One self-describing JSON config drives every subcommand; command-line
flags override the matching config fields.  All reports carry the schema
tag "sparselab-report/1" and are written atomically (write to a
temporary file, then rename), so a failed run never leaves a partial
output file.  Report content is bit-identical for identical (config,
seed) regardless of thread count; only ``bench`` output and ``--audit``
extras carry wall-clock timings and are exempt.

Exit codes: 0 success, 1 a check or certificate failed, 2 configuration
error.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time

import click
import numpy as np

from . import _accel
from .domination import (certificate_lhs, certificate_rhs, cz_construct,
                         derive_config, verify_domination)
from .dyadic import (WitnessSelectionError, build_shifted_adjacent,
                     build_standard_lattice, lattice_to_descriptor,
                     select_witnesses)
from .operators import MultiIndexPair, ball_mass_kernel, sparse_operator
from .space import build_grid_space, space_from_descriptor, space_to_descriptor
from .space import doubling_constant as space_doubling_constant
from .verify import CheckSpec, _random_sparse_family, registry_ids, run_check
from .weights import (ExponentConfig, avg, dual_weight,
                      fractional_apq_constant, fujii_wilson_constant,
                      fujii_wilson_single, hruscev_constant, hruscev_single,
                      joint_astar_constant, component_hruscev_constant,
                      component_wilson_constant, make_weight, muckenhoupt_ap)

SCHEMA = "sparselab-report/1"

CONSTANT_KINDS = ("A_p", "A_inf_fujii", "A_pq_star", "A_pq",
                  "W_inf", "H_inf", "W_inf_i", "H_inf_i")

_TOP_FIELDS = {"schema", "space", "lattice", "exponents", "weights",
               "functions", "symbols", "family", "pair", "checks", "kinds",
               "seed", "trials", "n", "out", "eta", "alpha", "bench"}


class ConfigError(click.UsageError):
    """Configuration problem; maps to exit code 2."""


# -- config plumbing ---------------------------------------------------------

def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    for key in raw:
        if key not in _TOP_FIELDS:
            raise ConfigError(f"config: unknown field {key!r}")
    return raw


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return _is_int(v) or isinstance(v, float)


def _int_field(obj, key, where, default=None, minimum=None):
    val = obj.get(key, default)
    if val is None:
        return None
    if not _is_int(val):
        raise ConfigError(f"{where}.{key} must be an integer")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}")
    return val


def _num_field(obj, key, where, default=None):
    val = obj.get(key, default)
    if val is None:
        return None
    if not _is_num(val):
        raise ConfigError(f"{where}.{key} must be a number")
    return float(val)


def _space_from_config(cfg, n_flag):
    desc = cfg.get("space", {})
    if not isinstance(desc, dict):
        raise ConfigError("space must be an object")
    for key in desc:
        if key not in ("kind", "n", "masses", "metric", "a0"):
            raise ConfigError(f"space.{key} is not a recognized field")
    desc = dict(desc)
    desc.setdefault("kind", "grid")
    if desc["kind"] not in ("grid", "explicit"):
        raise ConfigError(f"space.kind must be 'grid' or 'explicit', "
                          f"got {desc['kind']!r}")
    if n_flag is not None:
        desc["n"] = n_flag
        masses = desc.get("masses")
        if isinstance(masses, list) and len(masses) != n_flag:
            # flag overrides the whole space shape, not just the label
            desc.pop("masses")
    if "n" in desc and not _is_int(desc["n"]):
        raise ConfigError("space.n must be an integer")
    if "masses" in desc and desc["masses"] is not None:
        if not isinstance(desc["masses"], list):
            raise ConfigError("space.masses must be an array")
        for i, v in enumerate(desc["masses"]):
            if not (_is_num(v) or isinstance(v, str)):
                raise ConfigError(f"space.masses[{i}] must be a number "
                                  "or a decimal string")
    if "n" not in desc and "masses" not in desc:
        desc["n"] = 16
    try:
        return space_from_descriptor(desc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"space: {exc}") from None


def _exponents_from_config(cfg):
    exp = cfg.get("exponents")
    if exp is None:
        return None
    if not isinstance(exp, dict):
        raise ConfigError("exponents must be an object")
    for key in exp:
        if key not in ("m", "p", "q", "eta", "p0", "gamma", "r"):
            raise ConfigError(f"exponents.{key} is not a recognized field")
    p = exp.get("p")
    if not isinstance(p, list) or not p or not all(_is_num(v) for v in p):
        raise ConfigError("exponents.p must be a non-empty number array")
    m = _int_field(exp, "m", "exponents", default=len(p), minimum=1)
    if m != len(p):
        raise ConfigError("exponents.m disagrees with the length of "
                          "exponents.p")
    q = _num_field(exp, "q", "exponents")
    if q is None:
        raise ConfigError("exponents.q is required")
    try:
        return ExponentConfig(
            m, tuple(float(v) for v in p), q,
            eta=_num_field(exp, "eta", "exponents"),
            p0=_num_field(exp, "p0", "exponents", default=1.0),
            gamma=_num_field(exp, "gamma", "exponents", default=1.0),
            r=_num_field(exp, "r", "exponents", default=1.0))
    except ValueError as exc:
        raise ConfigError(f"exponents: {exc}") from None


def _array_spec(space, spec, where, allow_negative=False):
    if isinstance(spec, str):
        try:
            return make_weight(space, spec)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if isinstance(spec, list):
        if len(spec) != space.n or not all(_is_num(v) for v in spec):
            raise ConfigError(f"{where} must be a length-{space.n} "
                              "number array")
        arr = np.array([float(v) for v in spec])
        if not allow_negative and np.any(arr < 0.0):
            raise ConfigError(f"{where} must be nonnegative")
        return arr
    raise ConfigError(f"{where} must be a preset string or an array")


def _weights_from_config(space, cfg, flags):
    specs = list(flags) if flags else cfg.get("weights")
    if specs is None or not isinstance(specs, list) or not specs:
        raise ConfigError("weights: at least one weight is required "
                          "(--weight flag or config array)")
    return [_array_spec(space, s, f"weights[{i}]")
            for i, s in enumerate(specs)]


def _functions_from_config(space, cfg, count, seed, salt, key="functions",
                           signed=False):
    specs = cfg.get(key)
    if specs is None:
        rng = np.random.default_rng((seed, salt))
        draws = rng.standard_normal((count, space.n))
        return [d if signed else np.abs(d) for d in draws]
    if not isinstance(specs, list):
        raise ConfigError(f"{key} must be an array")
    if len(specs) != count:
        raise ConfigError(f"{key} must provide {count} entries "
                          f"(one per slot), got {len(specs)}")
    return [_array_spec(space, s, f"{key}[{i}]", allow_negative=signed)
            for i, s in enumerate(specs)]


# -- output plumbing ---------------------------------------------------------

def _write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".sparselab-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text, out):
    if not text.endswith("\n"):
        text += "\n"
    if out is None:
        click.echo(text, nl=False)
    else:
        _write_text(out, text)


def _json_payload(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# -- group -------------------------------------------------------------------

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON experiment config; flags override its fields.")
@click.option("--seed", type=int, default=None,
              help="Global RNG seed (default 1).")
@click.option("--threads", type=int, default=None,
              help="Thread budget for the compiled backend; never "
                   "changes results.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output file; stdout when omitted.")
@click.option("--audit", is_flag=True,
              help="Include per-point / timing detail (audit outputs "
                   "are not bit-stable).")
@click.version_option(package_name="sparselab", prog_name="sparselab")
@click.pass_context
def cli(ctx, config_path, seed, threads, out_path, audit):
    """Sparse-operator laboratory on finite spaces of homogeneous type."""
    cfg = _load_config(config_path)
    if seed is None:
        seed = _int_field(cfg, "seed", "config", default=1)
    if threads is not None:
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        if _accel.USE_NUMBA:
            limit = _accel.numba.config.NUMBA_NUM_THREADS
            _accel.numba.set_num_threads(min(threads, limit))
    if out_path is None:
        out = cfg.get("out")
        if out is not None and not isinstance(out, str):
            raise ConfigError("config.out must be a string path")
        out_path = out
    ctx.obj = {"cfg": cfg, "seed": seed, "out": out_path, "audit": audit}


# -- space -------------------------------------------------------------------

@cli.command("space")
@click.option("--n", type=int, default=None,
              help="Grid size (power of two); overrides the config.")
@click.pass_context
def cmd_space(ctx, n):
    """Build the point space and emit its descriptor plus doubling data."""
    space = _space_from_config(ctx.obj["cfg"], n)
    payload = {
        "schema": SCHEMA,
        "report": "space",
        "space": space_to_descriptor(space),
        "n": space.n,
        "mass_total": float(space.masses.sum()),
        "quasi_triangle_constant": space.a0,
        "doubling_constant": space_doubling_constant(space),
    }
    _emit(_json_payload(payload), ctx.obj["out"])


# -- lattice -----------------------------------------------------------------

@cli.command("lattice")
@click.option("--n", type=int, default=None)
@click.option("--shifts", type=int, default=None,
              help="Cyclically shifted systems to build (default 1).")
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also write the per-cube CSV table here.")
@click.pass_context
def cmd_lattice(ctx, n, shifts, csv_path):
    """Build dyadic lattices and emit their cube dumps."""
    cfg = ctx.obj["cfg"]
    lat_cfg = cfg.get("lattice", {})
    if not isinstance(lat_cfg, dict):
        raise ConfigError("lattice must be an object")
    for key in lat_cfg:
        if key != "shifts":
            raise ConfigError(f"lattice.{key} is not a recognized field")
    if shifts is None:
        shifts = _int_field(lat_cfg, "shifts", "lattice", default=1,
                            minimum=1)
    elif shifts < 1:
        raise ConfigError("shifts must be >= 1")
    space = _space_from_config(cfg, n)
    payload = {"schema": SCHEMA, "report": "lattice"}
    if shifts == 1:
        lattices = [build_standard_lattice(space)]
    else:
        systems = build_shifted_adjacent(space, shifts)
        lattices = systems.lattices
        payload["c_adj"] = systems.c_adj
        payload["skipped_shifts"] = list(systems.skipped_shifts)
    payload["systems"] = len(lattices)
    payload["cube_count"] = sum(len(lat.cubes) for lat in lattices)
    payload["lattices"] = [lattice_to_descriptor(lat) for lat in lattices]
    _emit(_json_payload(payload), ctx.obj["out"])
    if csv_path is not None:
        rows = [(lat.system, c.cube_id, c.gen, repr(c.mass))
                for lat in lattices for c in lat.cubes]
        _write_text(csv_path,
                    _csv_text(("system", "id", "gen", "mass"), rows))


# -- constants ---------------------------------------------------------------

def _require_exponents(ecfg, kind, m):
    if ecfg is None:
        raise ConfigError(f"{kind} needs an exponents config "
                          "(config field 'exponents')")
    if ecfg.m != m:
        raise ConfigError(f"exponents.m = {ecfg.m} but {m} weights given")


def _constant_rows(kind, lattice, ws, ecfg):
    m = len(ws)
    if kind == "A_p":
        p = ecfg.q if ecfg is not None else 2.0
        return [(f"A_p:{i}", *muckenhoupt_ap(lattice, w, p, detail=True))
                for i, w in enumerate(ws)]
    if kind == "A_inf_fujii":
        return [(f"A_inf_fujii:{i}",
                 *fujii_wilson_single(lattice, w, detail=True))
                for i, w in enumerate(ws)]
    if kind == "A_pq_star":
        _require_exponents(ecfg, kind, m)
        return [("A_pq_star", *joint_astar_constant(
            lattice, ws, ecfg.p, ecfg.q, detail=True))]
    if kind == "A_pq":
        _require_exponents(ecfg, kind, m)
        return [("A_pq", *fractional_apq_constant(
            lattice, ws, ecfg.p, ecfg.q, detail=True))]
    if kind == "W_inf":
        _require_exponents(ecfg, kind, m)
        return [("W_inf", *fujii_wilson_constant(
            lattice, ws, ecfg.p, ecfg.q, detail=True))]
    if kind == "H_inf":
        _require_exponents(ecfg, kind, m)
        return [("H_inf", *hruscev_constant(
            lattice, ws, ecfg.p, ecfg.q, detail=True))]
    if kind in ("W_inf_i", "H_inf_i"):
        _require_exponents(ecfg, kind, m)
        try:
            sigmas = [dual_weight(w, pi) for w, pi in zip(ws, ecfg.p)]
        except ValueError as exc:
            raise ConfigError(f"{kind}: {exc}") from None
        u = np.prod(np.stack([w ** (ecfg.q / pi)
                              for w, pi in zip(ws, ecfg.p)]), axis=0)
        fn = (component_wilson_constant if kind == "W_inf_i"
              else component_hruscev_constant)
        rows = []
        for i in range(m):
            try:
                val = fn(lattice, u, sigmas, ecfg.p, ecfg.q, ecfg.gamma, i,
                         detail=True)
            except ValueError as exc:
                raise ConfigError(f"{kind}: {exc}") from None
            rows.append((f"{kind}:{i}", *val))
        return rows
    raise ConfigError(f"unknown constant kind {kind!r}; valid kinds: "
                      + ", ".join(CONSTANT_KINDS))


@cli.command("constants")
@click.option("--n", type=int, default=None)
@click.option("--kind", "kinds", multiple=True,
              help="Constant kind (repeatable); see 'constants --help'. "
                   "Kinds: " + ", ".join(CONSTANT_KINDS) + ".")
@click.option("--weight", "weight_flags", multiple=True,
              help="Weight preset (repeatable): const, step, power:a, "
                   "random:seed.")
@click.pass_context
def cmd_constants(ctx, n, kinds, weight_flags):
    """Compute weight characteristics as CSV rows kind,value,argmax."""
    cfg = ctx.obj["cfg"]
    space = _space_from_config(cfg, n)
    lattice = build_standard_lattice(space)
    kinds = list(kinds) or cfg.get("kinds") or []
    if not isinstance(kinds, list) or not all(isinstance(k, str)
                                              for k in kinds):
        raise ConfigError("kinds must be an array of strings")
    if not kinds:
        raise ConfigError("kinds: at least one constant kind is required "
                          "(--kind flag or config array)")
    ws = _weights_from_config(space, cfg, weight_flags)
    ecfg = _exponents_from_config(cfg)
    rows = []
    for kind in kinds:
        for label, value, cube_id in _constant_rows(kind, lattice, ws, ecfg):
            rows.append((label, repr(float(value)),
                         "" if cube_id is None else cube_id))
    _emit(_csv_text(("kind", "value", "argmax_cube"), rows),
          ctx.obj["out"])


# -- sparse ------------------------------------------------------------------

def _family_from_config(cfg, lattice, seed):
    fam_cfg = cfg.get("family")
    if fam_cfg is None:
        return _random_sparse_family(
            lattice, np.random.default_rng((seed, 101)))
    if not isinstance(fam_cfg, dict):
        raise ConfigError("family must be an object")
    for key in fam_cfg:
        if key not in ("cube_ids", "delta"):
            raise ConfigError(f"family.{key} is not a recognized field")
    ids = fam_cfg.get("cube_ids")
    if not isinstance(ids, list) or not all(_is_int(v) for v in ids):
        raise ConfigError("family.cube_ids must be an integer array")
    delta = _num_field(fam_cfg, "delta", "family", default=0.5)
    try:
        return select_witnesses(lattice, ids, delta)
    except WitnessSelectionError as exc:
        raise ConfigError(f"family: {exc}") from None
    except (ValueError, KeyError, IndexError) as exc:
        raise ConfigError(f"family.cube_ids: {exc}") from None


@cli.command("sparse")
@click.option("--n", type=int, default=None)
@click.option("--eta", type=float, default=None,
              help="Mass exponent (default from exponents config, else 0).")
@click.option("--dump-per-cube", "dump_path", type=click.Path(),
              default=None, help="CSV of each cube's coefficient.")
@click.pass_context
def cmd_sparse(ctx, n, eta, dump_path):
    """Apply the basic sparse form to the configured arguments."""
    cfg, seed = ctx.obj["cfg"], ctx.obj["seed"]
    space = _space_from_config(cfg, n)
    lattice = build_standard_lattice(space)
    family = _family_from_config(cfg, lattice, seed)
    ecfg = _exponents_from_config(cfg)
    m = ecfg.m if ecfg is not None else 1
    p0 = ecfg.p0 if ecfg is not None else 1.0
    gamma = ecfg.gamma if ecfg is not None else 1.0
    if eta is None:
        eta = ecfg.eta if ecfg is not None else 0.0
    fs = _functions_from_config(space, cfg, m, seed, 7)
    out_arr = sparse_operator(family, fs, eta=eta, p0=p0, gamma=gamma)
    payload = {
        "schema": SCHEMA,
        "report": "sparse",
        "eta": eta, "p0": p0, "gamma": gamma, "slots": m,
        "family": {"delta": family.delta,
                   "cube_ids": list(family.cube_ids)},
        "output": out_arr.tolist(),
    }
    _emit(_json_payload(payload), ctx.obj["out"])
    if dump_path is not None:
        rows = []
        for cid in family.cube_ids:
            cube = lattice.cube(cid)
            coeff = cube.mass ** eta
            for f in fs:
                coeff *= avg(space, cube.members, f, p0)
            rows.append((cid, cube.gen, repr(cube.mass),
                         repr(coeff ** gamma)))
        _write_text(dump_path, _csv_text(
            ("cube_id", "gen", "mass", "coefficient"), rows))


# -- dominate ----------------------------------------------------------------

def _pair_from_config(cfg, k_flag):
    pair_cfg = cfg.get("pair", {})
    if not isinstance(pair_cfg, dict):
        raise ConfigError("pair must be an object")
    for key in pair_cfg:
        if key not in ("k", "tau_ell"):
            raise ConfigError(f"pair.{key} is not a recognized field")
    if k_flag is not None:
        try:
            k = tuple(int(v) for v in k_flag.split(","))
        except ValueError:
            raise ConfigError("--k must be comma-separated integers, "
                              "e.g. 1,0") from None
    else:
        k = pair_cfg.get("k", [1])
        if not isinstance(k, list) or not all(_is_int(v) for v in k):
            raise ConfigError("pair.k must be an integer array")
        k = tuple(k)
    tau_ell = pair_cfg.get("tau_ell")
    if tau_ell is None:
        tau_ell = tuple(i for i, ki in enumerate(k) if ki > 0)
    elif not isinstance(tau_ell, list) or \
            not all(_is_int(v) for v in tau_ell):
        raise ConfigError("pair.tau_ell must be an integer array")
    try:
        return MultiIndexPair(k=k, t=(0,) * len(k), tau=(),
                              tau_ell=tuple(tau_ell))
    except ValueError as exc:
        raise ConfigError(f"pair: {exc}") from None


@cli.command("dominate")
@click.option("--n", type=int, default=None)
@click.option("--shifts", type=int, default=None)
@click.option("--eta", type=float, default=None)
@click.option("--k", "k_flag", default=None,
              help="Comma-separated oscillation orders per slot, "
                   "e.g. 1,0.")
@click.option("--alpha", type=float, default=None,
              help="Level-set step factor (default 1).")
@click.option("--audit-csv", "audit_csv", type=click.Path(), default=None,
              help="Per-point CSV path (implied by --audit when --out "
                   "is a file).")
@click.pass_context
def cmd_dominate(ctx, n, shifts, eta, k_flag, alpha, audit_csv):
    """Run the stopping-time construction and emit its certificate."""
    cfg, seed = ctx.obj["cfg"], ctx.obj["seed"]
    space = _space_from_config(cfg, n)
    if shifts is None:
        shifts = 1
    elif shifts < 1:
        raise ConfigError("shifts must be >= 1")
    pair = _pair_from_config(cfg, k_flag)
    m = pair.m
    if eta is None:
        eta = _num_field(cfg, "eta", "config", default=0.0)
    if eta >= m:
        raise ConfigError(f"eta must be < {m} (the slot count)")
    if alpha is None:
        alpha = _num_field(cfg, "alpha", "config", default=1.0)
    if alpha <= 0.0:
        raise ConfigError("alpha must be positive")
    fs = _functions_from_config(space, cfg, m, seed, 5)
    symbols = _functions_from_config(space, cfg, m, seed, 6, key="symbols",
                                     signed=True)
    systems = build_shifted_adjacent(space, shifts)
    dom_cfg = derive_config(space, systems, alpha=alpha)
    cert = cz_construct(space, systems, fs, symbols, pair, eta, dom_cfg)
    lhs = certificate_lhs(space, fs, symbols, pair, eta)
    rhs = certificate_rhs(space, cert.families, fs, symbols, pair, eta)
    verdict = verify_domination(cert, lhs, rhs)
    payload = {
        "schema": SCHEMA,
        "report": "dominate",
        "certificate": cert.to_descriptor(audit=ctx.obj["audit"]),
        "verification": verdict,
    }
    _emit(_json_payload(payload), ctx.obj["out"])
    if audit_csv is None and ctx.obj["audit"] and ctx.obj["out"]:
        audit_csv = str(ctx.obj["out"]) + ".audit.csv"
    if audit_csv is not None:
        ratio = np.where(rhs > 0.0, lhs / np.where(rhs > 0.0, rhs, 1.0),
                         0.0)
        rows = [(x, repr(float(lhs[x])), repr(float(rhs[x])),
                 repr(float(ratio[x]))) for x in range(space.n)]
        _write_text(audit_csv,
                    _csv_text(("point", "lhs", "rhs", "ratio"), rows))
    if not verdict["pass"]:
        click.echo("certificate verification FAILED", err=True)
        ctx.exit(1)


# -- verify ------------------------------------------------------------------

@cli.command("verify")
@click.argument("check_ids", nargs=-1)
@click.option("--trials", type=int, default=None,
              help="Trials per check (0 keeps each check's default).")
@click.option("--n", type=int, default=None,
              help="Grid size for the checks (default 16).")
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Report JSON path (overrides --out).")
@click.pass_context
def cmd_verify(ctx, check_ids, trials, n, report_path):
    """Run numerical proof-step checks from the registry.

    CHECK_IDS are registry ids, or the single word 'all'.
    """
    cfg, seed = ctx.obj["cfg"], ctx.obj["seed"]
    ids = list(check_ids)
    if not ids:
        ids = cfg.get("checks") or []
        if not isinstance(ids, list) or not all(isinstance(v, str)
                                                for v in ids):
            raise ConfigError("checks must be an array of check ids")
    if ids == ["all"]:
        ids = registry_ids()
    if not ids:
        raise ConfigError("checks: empty check list; pass check ids "
                          "or 'all'")
    valid = registry_ids()
    for cid in ids:
        if cid not in valid:
            raise ConfigError(f"unknown check id {cid!r}; valid ids: "
                              + ", ".join(valid))
    if trials is None:
        trials = _int_field(cfg, "trials", "config", default=0, minimum=0)
    if n is None:
        n = _int_field(cfg, "n", "config", default=16, minimum=2)
    ecfg = _exponents_from_config(cfg)
    reports = []
    for cid in ids:
        spec = CheckSpec(check_id=cid, config=ecfg, n=n, trials=trials,
                         seed=seed)
        try:
            reports.append(run_check(spec))
        except ValueError as exc:
            raise ConfigError(f"{cid}: {exc}") from None
    for rep in reports:
        status = "pass" if rep.passed else "FAIL"
        click.echo(f"{rep.check_id}: {status} ({rep.mode}, "
                   f"trials={rep.trials}, worst={rep.worst_ratio!r})")
    payload = {
        "schema": SCHEMA,
        "report": "verify",
        "seed": seed,
        "n": n,
        "passed": all(rep.passed for rep in reports),
        "checks": [rep.to_descriptor(include_runtime=ctx.obj["audit"])
                   for rep in reports],
    }
    target = report_path or ctx.obj["out"]
    if target is not None:
        _write_text(target, _json_payload(payload) + "\n")
    if not payload["passed"]:
        ctx.exit(1)


# -- bench -------------------------------------------------------------------

def _best_time(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


_BACKEND = _accel.backend_name()


def _bench_sparse_sum(space, lattice, rng, repeats):
    rows = []
    gens = lattice.generations
    depth = len(gens)
    for tail in sorted({1, max(1, depth // 2), depth}):
        ids = [cid for gen in gens[depth - tail:] for cid in gen]
        members = [lattice.cube(cid).members for cid in ids]
        flat = np.concatenate(members)
        offsets = np.zeros(len(members) + 1, dtype=np.int64)
        np.cumsum([len(mm) for mm in members], out=offsets[1:])
        coeffs = rng.uniform(0.5, 2.0, size=len(members))
        fast = _accel.scatter_add_cubes(
            np.zeros(space.n), flat, offsets, coeffs)
        ref = _accel.scatter_add_cubes_numpy(
            np.zeros(space.n), flat, offsets, coeffs)
        t_fast = _best_time(lambda: _accel.scatter_add_cubes(
            np.zeros(space.n), flat, offsets, coeffs), repeats)
        t_ref = _best_time(lambda: _accel.scatter_add_cubes_numpy(
            np.zeros(space.n), flat, offsets, coeffs), repeats)
        rows.append(("sparse_sum", _BACKEND, space.n, len(ids),
                     repr(t_fast), repr(t_ref),
                     repr(flat.size / max(t_fast, 1e-12)),
                     repr(float(np.abs(fast - ref).max()))))
    return rows


def _bench_frac_kernels(space, rng, repeats):
    rows = []
    kernel = ball_mass_kernel(space)
    w1 = rng.uniform(0.1, 1.0, size=space.n)
    w2 = rng.uniform(0.1, 1.0, size=space.n)
    expo = -0.5
    fast = _accel.frac_kernel_m1(kernel, w1, expo)
    ref = _accel.frac_kernel_m1_numpy(kernel, w1, expo)
    t_fast = _best_time(lambda: _accel.frac_kernel_m1(kernel, w1, expo),
                        repeats)
    t_ref = _best_time(
        lambda: _accel.frac_kernel_m1_numpy(kernel, w1, expo), repeats)
    rows.append(("frac_kernel_m1", _BACKEND, space.n, space.n,
                 repr(t_fast), repr(t_ref),
                 repr(space.n ** 2 / max(t_fast, 1e-12)),
                 repr(float(np.abs(fast - ref).max()))))
    if space.n <= 64:
        fast = _accel.frac_kernel_m2(kernel, w1, w2, expo)
        ref = _accel.frac_kernel_m2_numpy(kernel, w1, w2, expo)
        t_fast = _best_time(
            lambda: _accel.frac_kernel_m2(kernel, w1, w2, expo), repeats)
        t_ref = _best_time(
            lambda: _accel.frac_kernel_m2_numpy(kernel, w1, w2, expo),
            repeats)
        rows.append(("frac_kernel_m2", _BACKEND, space.n, space.n,
                     repr(t_fast), repr(t_ref),
                     repr(space.n ** 3 / max(t_fast, 1e-12)),
                     repr(float(np.abs(fast - ref).max()))))
    return rows


@cli.command("bench")
@click.option("--n", "ns", multiple=True, type=int,
              help="Grid sizes to bench (repeatable; default 64 and "
                   "256).")
@click.option("--repeats", type=int, default=3, show_default=True,
              help="Timing repetitions; the best is reported.")
@click.pass_context
def cmd_bench(ctx, ns, repeats):
    """Time the compiled kernels against the numpy reference.

    Rows are ordered by increasing problem size; summation in the numpy
    reference path uses numpy's pairwise reductions.
    """
    cfg, seed = ctx.obj["cfg"], ctx.obj["seed"]
    bench_cfg = cfg.get("bench", {})
    if not isinstance(bench_cfg, dict):
        raise ConfigError("bench must be an object")
    for key in bench_cfg:
        if key != "ns":
            raise ConfigError(f"bench.{key} is not a recognized field")
    if not ns:
        ns = bench_cfg.get("ns", [64, 256])
        if not isinstance(ns, list) or not all(_is_int(v) for v in ns):
            raise ConfigError("bench.ns must be an integer array")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    rows = []
    for n in sorted(set(int(v) for v in ns)):
        space = build_grid_space(n)
        lattice = build_standard_lattice(space)
        rng = np.random.default_rng((seed, 11, n))
        rows.extend(_bench_sparse_sum(space, lattice, rng, repeats))
        rows.extend(_bench_frac_kernels(space, rng, repeats))
    _emit(_csv_text(("op", "backend", "n", "size", "seconds",
                     "numpy_seconds", "throughput_per_s",
                     "max_abs_diff"), rows),
          ctx.obj["out"])


def main(argv=None):
    return cli.main(args=argv, prog_name="sparselab")


if __name__ == "__main__":
    main()
