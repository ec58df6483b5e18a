"""Command-line front end.

    coulombgas COMMAND [--config PATH] [--n LIST] [--s LIST] [--alpha X]
                       [--seed U64] [--samples U64] [--out DIR] [--workers K]

Commands: ``droplet``, ``functionals``, ``free-energy``, ``fluct``,
``outpost``, ``identities``.  Exit status: 0 success, 2 invalid input,
3 a numerical gate failed, 64 unknown command.

The optional configuration file is INI-style::

    [potential]
    family = even_polynomial      ; ginibre | even_polynomial | two_component | ginibre_with_outpost
    coeffs = -2, 1

    [test_function]
    name = r2                     ; none | const | r2 | power | cosh_window | indicator | ell

    [perturbation]
    s = 0.5, 1
    alpha = 0

    [run]
    n = 100, 200
    mode = regular                ; regular | conical | log_statistic (fluct only)

    [policy]
    C_cut = 20

    [sampler]
    seed = 0
    n_samples = 100000
    workers = 1

    [output]
    dir = out

Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from . import droplet as dl
from . import families
from . import functionals as fn
from . import potential as pot
from .errors import CoulombGasError, DomainError, GeometryError

COMMANDS = ("droplet", "functionals", "free-energy", "fluct", "outpost", "identities")
EXIT_OK, EXIT_INVALID, EXIT_GATE, EXIT_USAGE = 0, 2, 3, 64

FAMILIES = ("ginibre", "even_polynomial", "two_component", "ginibre_with_outpost")
TEST_FUNCTIONS = ("none", "const", "r2", "power", "cosh_window", "indicator", "ell")
MODES = ("regular", "conical", "log_statistic")

SCHEMA = {
    "potential": {"family": str, "c": float, "coeffs": "floats", "b0": float, "a1": float, "M0": float, "t": float},
    "test_function": {"name": str, "value": float, "p": float, "center": float, "width": float, "cut": float},
    "perturbation": {"s": "floats", "alpha": float},
    "run": {"n": "ints", "mode": str, "draws": int},
    "policy": {"C_cut": float},
    "sampler": {"seed": int, "n_samples": int, "workers": int},
    "output": {"dir": str},
}


class ConfigError(CoulombGasError):
    """Invalid configuration (reported with file and line)."""


@dataclass
class RunConfig:
    family: str = "ginibre"
    family_params: Dict[str, object] = field(default_factory=dict)
    test_function: str = "r2"
    tf_params: Dict[str, float] = field(default_factory=dict)
    s: List[float] = field(default_factory=lambda: [0.0])
    alpha: float = 0.0
    n: List[int] = field(default_factory=lambda: [100])
    mode: str = "regular"
    draws: int = 100
    C_cut: float = 20.0
    seed: int = 0
    n_samples: int = 10000
    workers: int = 1
    out: str = "out"

    def validate(self, where: Dict[tuple, str]) -> None:
        def fail(section, key, msg):
            raise ConfigError(f"{where.get((section, key), '<command line>')}: {section}.{key}: {msg}")

        if self.family not in FAMILIES:
            fail("potential", "family", f"unknown family {self.family!r} (choose from {', '.join(FAMILIES)})")
        if self.test_function not in TEST_FUNCTIONS:
            fail("test_function", "name", f"unknown test function {self.test_function!r}")
        if self.mode not in MODES:
            fail("run", "mode", f"unknown mode {self.mode!r}")
        if not self.n or any(v < 2 for v in self.n):
            fail("run", "n", "every n must be at least 2")
        if self.alpha <= -1:
            fail("perturbation", "alpha", "alpha must exceed -1")
        if self.n_samples < 1:
            fail("sampler", "n_samples", "must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            fail("sampler", "seed", "must be an unsigned 64-bit integer")
        if self.workers < 1:
            fail("sampler", "workers", "must be positive")
        if self.C_cut <= 0:
            fail("policy", "C_cut", "must be positive")


def _parse_value(kind, text: str):
    if kind is str:
        return text.strip()
    if kind is float:
        return float(text)
    if kind is int:
        return int(text)
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    if kind == "floats":
        return [float(t) for t in items]
    if kind == "ints":
        return [int(t) for t in items]
    raise AssertionError(kind)


def _line_index(text: str) -> Dict[tuple, int]:
    """``(section, key) -> line number`` for error messages."""
    idx, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif section and s and not s.startswith(("#", ";")) and ("=" in s or ":" in s):
            key = s.replace(":", "=", 1).split("=", 1)[0].strip()
            idx[(section, key)] = no
    return idx


def load_config(path: Optional[str]) -> tuple[RunConfig, Dict[tuple, str]]:
    cfg = RunConfig()
    where: Dict[tuple, str] = {}
    if path is None:
        return cfg, where
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: expected a [section] header") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{path}:{lineno}: malformed line") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: duplicate key {exc.option!r}") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: duplicate section {exc.section!r}") from None
    lines = _line_index(text)
    for (sec, key), no in lines.items():
        where[(sec, key)] = f"{path}:{no}"
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{sec}]")
        for key, raw in parser.items(sec):
            loc = where.get((sec, key), path)
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{loc}: unknown key {sec}.{key}")
            try:
                val = _parse_value(SCHEMA[sec][key], raw)
            except ValueError:
                raise ConfigError(f"{loc}: {sec}.{key}: cannot parse {raw.strip()!r}") from None
            _apply(cfg, sec, key, val)
    cfg.validate(where)
    return cfg, where


def _apply(cfg: RunConfig, sec: str, key: str, val) -> None:
    if sec == "potential":
        if key == "family":
            cfg.family = val
        else:
            cfg.family_params[key] = val
    elif sec == "test_function":
        if key == "name":
            cfg.test_function = val
        else:
            cfg.tf_params[key] = val
    elif sec == "perturbation":
        setattr(cfg, key, val)
    elif sec == "run":
        setattr(cfg, key, val)
    elif sec == "policy":
        cfg.C_cut = val
    elif sec == "sampler":
        setattr(cfg, key, val)
    elif sec == "output":
        cfg.out = val


# ---------------------------------------------------------------------------
# builders


def build_potential(cfg: RunConfig) -> pot.RadialPotential:
    p = cfg.family_params
    if cfg.family == "ginibre":
        return families.ginibre(float(p.get("c", 1.0)))
    if cfg.family == "even_polynomial":
        return families.even_polynomial(p.get("coeffs", [-2.0, 1.0]))
    if cfg.family == "two_component":
        return families.two_component(float(p.get("b0", 0.5)), float(p.get("a1", 5.0)), float(p.get("M0", 0.3)))
    return families.ginibre_with_outpost(float(p.get("t", 1.5)))


def build_test_function(cfg: RunConfig) -> Optional[pot.TestFunction]:
    p = cfg.tf_params
    name = cfg.test_function
    if name == "none":
        return None
    if name == "const":
        return pot.constant(p.get("value", 1.0))
    if name == "r2":
        return pot.power(2)
    if name == "power":
        return pot.power(p.get("p", 2.0))
    if name == "cosh_window":
        return pot.cosh_window(p.get("center", 0.5), p.get("width", 0.2))
    if name == "indicator":
        return pot.smoothed_indicator(p.get("cut", 0.5), p.get("width", 0.05))
    return pot.log_modulus()


# ---------------------------------------------------------------------------
# commands


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema=1"])
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _write(out: str, name: str, text: str) -> str:
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def cmd_droplet(cfg: RunConfig) -> int:
    P = build_potential(cfg)
    G = dl.compute_droplet(P)
    print(_write(cfg.out, "geometry.json", G.to_json()))
    return EXIT_OK


def cmd_functionals(cfg: RunConfig) -> int:
    P = build_potential(cfg)
    G = dl.compute_droplet(P)
    h = build_test_function(cfg)
    rep = fn.functional_report(P, G, h if h is None or not h.singular_at_origin or G.euler_char == 0 else None)
    rows = [("I_Q", rep.I_Q), ("E_Q", rep.E_Q), ("F_Q", rep.F_Q), ("euler_char", rep.euler_char),
            ("sigma_h", rep.sigma_h), ("e_h", rep.e_h), ("v_h", rep.v_h)]
    rows += [(f"F_Q_component_{k}", v) for k, v in enumerate(rep.F_Q_parts)]
    if G.N:
        gaps = fn.gap_constants(P, G, h, pot.Perturbation(0.0, 0.0), cfg.n[0])
        for k in range(gaps.N):
            rows += [(f"rho_{k}", gaps.rho[k]), (f"theta_{k}", gaps.theta[k]), (f"c_{k}", gaps.c[k])]
    print(_write(cfg.out, "functionals.csv", _csv(["quantity", "value"], rows)))
    return EXIT_OK


def cmd_free_energy(cfg: RunConfig) -> int:
    from . import free_energy as fe

    P = build_potential(cfg)
    G = dl.compute_droplet(P)
    if G.outposts:
        raise GeometryError("the droplet has an outpost; the regular expansion does not apply "
                            "(hint: use the 'outpost' command)")
    h = build_test_function(cfg)
    rows, breakdowns = [], []
    for s in cfg.s:
        pert = pot.Perturbation(s, cfg.alpha)
        for n in cfg.n:
            policy = dl.CutoffPolicy(n, cfg.C_cut)
            lz, _ = fe.log_partition_exact(P, h if s else None, pert, n, policy, G)
            if cfg.alpha != 0:
                bd = fe.expansion_conical(P, G, h if s else None, pert, n)
            else:
                bd = fe.expansion_regular(P, G, h if s else None, pert, n)
            row = fe.compare_report([lz], [bd], [n])[0]
            rows.append((s, cfg.alpha, n, row.log_Z_exact, row.expansion_total, row.residual,
                         row.scaled_residual, row.residual_without_Gn))
            breakdowns.append(json.loads(bd.to_json()))
    header = ["s", "alpha", "n", "log_Z_exact", "expansion_total", "residual", "scaled_residual", "residual_without_Gn"]
    print(_write(cfg.out, "free_energy.csv", _csv(header, rows)))
    print(_write(cfg.out, "breakdowns.json", json.dumps(breakdowns, indent=2, sort_keys=True)))
    return EXIT_OK


def cmd_fluct(cfg: RunConfig) -> int:
    from . import fluctuations as fl

    P = build_potential(cfg)
    G = dl.compute_droplet(P)
    h = build_test_function(cfg)
    mode = cfg.mode
    if h is None:
        raise DomainError("the fluct command needs a test function")
    if h.singular_at_origin:
        mode = "log_statistic"
    elif mode == "regular" and cfg.alpha != 0:
        mode = "conical"
    if G.outposts:
        mode = "outpost"
    pert = pot.Perturbation(0.0, cfg.alpha if mode == "conical" else 0.0)
    s_grid = [s for s in cfg.s if s != 0] or [0.5]
    body, ok = [], True
    for n in cfg.n:
        rep = fl.cgf_comparison(P, G, h, pert, n, mode, s_grid, cfg.n_samples, cfg.seed, workers=cfg.workers)
        ok &= rep.passed
        body.append(rep.to_csv() if not body else rep.to_csv().split("\n", 2)[2])
    print(_write(cfg.out, "cgf.csv", "".join(body)))
    return EXIT_OK if ok else EXIT_GATE


def cmd_outpost(cfg: RunConfig) -> int:
    from . import fluctuations as fl
    from . import free_energy as fe

    P = build_potential(cfg)
    G = dl.compute_droplet(P)
    if not G.outposts:
        raise GeometryError("the droplet has no outpost")
    h = build_test_function(cfg)
    rows = []
    for s in cfg.s:
        for n in cfg.n:
            R = fe.outpost_log_ratio(P, G, h if s else None, s, n, dl.CutoffPolicy(n, cfg.C_cut))
            rows.append((s, n, R.predicted, R.measured, R.difference, R.difference * n))
    print(_write(cfg.out, "outpost.csv",
                 _csv(["s", "n", "predicted", "measured", "difference", "scaled_difference"], rows)))
    law_rows = []
    pars = fe.outpost_parameters(P, G, None)
    if pars.case == "outer":
        for n in cfg.n:
            L = fl.outpost_count_law(P, G, n, cfg.n_samples, cfg.seed, workers=cfg.workers)
            for k, a, b in zip(L.support, L.empirical, L.exact):
                law_rows.append((n, int(k), float(a), float(b), L.tv))
        print(_write(cfg.out, "count_law.csv", _csv(["n", "k", "empirical_pmf", "heine_pmf", "tv"], law_rows)))
    return EXIT_OK


def cmd_identities(cfg: RunConfig) -> int:
    from .identities import identities_csv, run_identity_suite

    res = run_identity_suite(draws=cfg.draws, seed=cfg.seed)
    print(_write(cfg.out, "identities.csv", identities_csv(res)))
    for r in res:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: worst {r.worst:.2e} (threshold {r.threshold:.0e})")
    return EXIT_OK if all(r.passed for r in res) else EXIT_GATE


DISPATCH = {
    "droplet": cmd_droplet,
    "functionals": cmd_functionals,
    "free-energy": cmd_free_energy,
    "fluct": cmd_fluct,
    "outpost": cmd_outpost,
    "identities": cmd_identities,
}


def _list(kind):
    def parse(text):
        try:
            return [kind(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None

    return parse


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coulombgas", description="Free energies and fluctuations of radial 2D Coulomb gases.")
    ap.add_argument("command", help=" | ".join(COMMANDS))
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--n", type=_list(int), metavar="LIST")
    ap.add_argument("--s", type=_list(float), metavar="LIST")
    ap.add_argument("--alpha", type=float, metavar="X")
    ap.add_argument("--seed", type=int, metavar="U64")
    ap.add_argument("--samples", type=int, metavar="U64")
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--workers", type=int, metavar="K")
    return ap


def dispatch(command: str, cfg: RunConfig) -> int:
    return DISPATCH[command](cfg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    if args.command not in DISPATCH:
        print(f"coulombgas: unknown command {args.command!r} (choose from {', '.join(COMMANDS)})", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg, where = load_config(args.config)
        for flag, attr in (("n", "n"), ("s", "s"), ("alpha", "alpha"), ("seed", "seed"),
                           ("samples", "n_samples"), ("out", "out"), ("workers", "workers")):
            val = getattr(args, flag)
            if val is not None:
                setattr(cfg, attr, val)
        cfg.validate({})
    except ConfigError as exc:
        print(f"coulombgas: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return dispatch(args.command, cfg)
    except GeometryError as exc:
        print(f"coulombgas: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (DomainError, ValueError) as exc:
        print(f"coulombgas: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CoulombGasError as exc:
        print(f"coulombgas: numerical gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
