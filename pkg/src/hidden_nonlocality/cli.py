"""Command-line interface.

Exit codes: 0 success, 1 tolerance or statistical failure, 2 usage or
input error. CSV output is comma-separated with a header row and 17
significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bell, filtering, lhv, qcore, states, stateio
from .errors import DimensionMismatch, HiddenNonlocalityError, InvalidSettingsFile

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

REPRODUCE_COLUMNS = (
    "q",
    "S_unfiltered_state_q",
    "S_filtered_state_q",
    "S_filtered_rho_G",
    "S_rho_GM_filtered",
    "ppt_min_eig_state_q",
)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(header: Sequence[str], rows: Sequence[Sequence], out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _state_arg(args) -> qcore.BipartiteState:
    if getattr(args, "input", None):
        return stateio.load_state(args.input)
    if getattr(args, "family", None):
        return states.family_state(args.family, args.q)
    raise HiddenNonlocalityError("give either --input FILE or --family NAME")


def _local_state_arg(value: str, d: int) -> np.ndarray:
    """Keyword ``ket<k>`` / ``mixed`` or a single-party state file."""
    if value.startswith("ket") and value[3:].isdigit():
        k = int(value[3:])
        if k >= d:
            raise DimensionMismatch(f"{value} does not exist in dimension {d}")
        return qcore.basis_projector(k, d)
    if value == "mixed":
        return np.eye(d, dtype=complex) / d
    return stateio.load_local_state(value)


# --------------------------------------------------------------------------
# reproduce


def reproduce_tolerance(q: float, eps: float) -> float:
    """Allowed |S(eps) - S(0)| for the filtered columns; the eps^2 / q term covers small q."""
    return max(1e-6, 10 * eps**2 / q)


def reproduce_rows(q_grid: Sequence[float], eps: float) -> tuple[list[list[float]], list[str]]:
    rows, failures = [], []
    for q in q_grid:
        if not 0 < q <= 0.5:
            raise HiddenNonlocalityError(f"q grid must lie in (0, 1/2], got {q}")
        sq = states.state_q(q)
        fa, fb = filtering.paper_filters(eps, q)
        s_unf = bell.horodecki_S(sq)
        s_fq = bell.horodecki_S(filtering.apply_filters(sq, fa, fb).filtered)
        s_fg = bell.horodecki_S(filtering.apply_filters(states.state_rho_G(q), fa, fb).filtered)
        s_gm = bell.horodecki_S(filtering.project_to_qubits(states.state_rho_GM(q)).filtered)
        ppt = qcore.min_eig_partial_transpose(sq)
        rows.append([q, s_unf, s_fq, s_fg, s_gm, ppt])

        tol = reproduce_tolerance(q, eps)
        ppt_closed = ((1 - q) / 2 - math.sqrt(((1 - q) / 2) ** 2 + q * q)) / 2
        checks = [
            ("S_unfiltered_state_q", s_unf, 2 * math.sqrt(2) * q, 1e-9),
            ("S_filtered_state_q", s_fq, 2 * math.sqrt(1 + q), tol),
            ("S_filtered_rho_G", s_fg, 2 * math.sqrt(1 + q / 4), tol),
            ("S_rho_GM_filtered", s_gm, 2 * math.sqrt(2), 1e-9),
            ("ppt_min_eig_state_q", ppt, ppt_closed, 1e-9),
        ]
        for name, got, want, t in checks:
            if abs(got - want) > t:
                failures.append(f"q={q}: {name}={got:.12g} expected {want:.12g} (tol {t:.1e})")
    return rows, failures


def cmd_reproduce(args) -> int:
    rows, failures = reproduce_rows(args.q, args.eps)
    buf = io.StringIO()
    write_csv(REPRODUCE_COLUMNS, rows, buf)
    _emit(buf.getvalue(), args.out)
    for f in failures:
        print(f"FAIL {f}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


# --------------------------------------------------------------------------
# lhv


def load_settings(source: str, model: str, seed: int) -> list:
    if source.startswith("random:"):
        try:
            k = int(source.split(":", 1)[1])
        except ValueError:
            raise InvalidSettingsFile(f"expected random:K or a settings file, got {source!r}") from None
        return lhv.random_settings(model, k, lhv.settings_rng(seed))
    try:
        raw = json.loads(Path(source).read_text())
        if isinstance(raw, dict):
            raw = raw["settings"]
        return [lhv.setting_from_json(model, item) for item in raw]
    except (OSError, ValueError, KeyError, TypeError, HiddenNonlocalityError) as exc:
        raise InvalidSettingsFile(f"cannot read settings from {source!r}: {exc}") from exc


def cmd_lhv(args) -> int:
    settings = load_settings(args.settings, args.model, args.seed)
    report = lhv.run_lhv_experiment(
        args.model, settings, args.rounds, args.seed, q=args.q, workers=args.workers
    )
    _emit(json.dumps(report.to_dict(), sort_keys=True) + "\n", args.out)
    print(f"{args.model}: max_z={report.max_z:.3f} max_abs_dev={report.max_abs_dev:.3e}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# construct


def cmd_construct(args) -> int:
    rho0 = _state_arg(args)
    d = rho0.dim_a
    sigma_a = _local_state_arg(args.sigma_a, d)
    if args.one_sided:
        out = states.protocol2_map_one_sided(rho0, sigma_a)
    else:
        if args.sigma_b in (None, "none"):
            raise HiddenNonlocalityError("--sigma-b is required unless --one-sided is given")
        out = states.protocol2_map(rho0, sigma_a, _local_state_arg(args.sigma_b, rho0.dim_b))
    _emit(stateio.dumps_state(out), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# filter-scan / entanglement / chsh / sequential


def cmd_filter_scan(args) -> int:
    rows = filtering.filter_scan(args.family, args.q, args.eps)
    buf = io.StringIO()
    write_csv(
        ("eps", "S", "N", "S_richardson"),
        [[r.eps, r.S, r.N, r.S_richardson if r.S_richardson is not None else ""] for r in rows],
        buf,
    )
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_entanglement(args) -> int:
    s = _state_arg(args)
    lo = qcore.min_eig_partial_transpose(s)
    buf = io.StringIO()
    write_csv(("dim_a", "dim_b", "min_eig_partial_transpose", "npt"), [[s.dim_a, s.dim_b, lo, int(lo < -1e-12)]], buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _chsh_settings(source: str, s: qcore.BipartiteState) -> bell.ChshSettings:
    if source == "optimal":
        return bell.optimal_chsh_settings(s)
    if source == "canonical":
        return bell.canonical_settings()
    try:
        raw = json.loads(Path(source).read_text())
        return bell.ChshSettings(*(np.asarray(raw[k], float) for k in ("a1", "a2", "b1", "b2")))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InvalidSettingsFile(f"cannot read CHSH settings from {source!r}: {exc}") from exc


def cmd_chsh(args) -> int:
    s = _state_arg(args)
    n_success = 1.0
    if s.dims != (2, 2):
        if not args.project_qubit:
            raise DimensionMismatch(f"CHSH needs a 2x2 state, got {s.dims}; pass --project-qubit")
        out = filtering.project_to_qubits(s)
        s, n_success = out.filtered, out.success_prob
    c = _chsh_settings(args.settings, s)
    buf = io.StringIO()
    write_csv(
        ("S", "horodecki_S", "projection_success_prob"),
        [[bell.chsh_value(s, c), bell.horodecki_S(s), n_success]],
        buf,
    )
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_sequential(args) -> int:
    s = _state_arg(args)
    if args.filters == "subspace":
        fa, fb = filtering.qubit_subspace_filter(s.dim_a, "A"), filtering.qubit_subspace_filter(s.dim_b, "B")
    elif args.filters == "epsilon":
        fa, fb = filtering.paper_filters(args.eps, args.q)
    else:
        fa = filtering.LocalFilter(np.eye(s.dim_a), "A")
        fb = filtering.LocalFilter(np.eye(s.dim_b), "B")
    report = filtering.sequential_mc(s, fa, fb, rounds=args.rounds, seed=args.seed, workers=args.workers)
    _emit(json.dumps(report.to_dict(), sort_keys=True) + "\n", args.out)
    ok = report.success_z <= lhv.Z_THRESHOLD and report.S_z <= lhv.Z_THRESHOLD
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------


def _add_state_args(p: argparse.ArgumentParser, default_family: str | None = None) -> None:
    g = p.add_mutually_exclusive_group(required=default_family is None)
    g.add_argument("--input", help="JSON state file")
    g.add_argument("--family", choices=states.FAMILIES, default=default_family)
    p.add_argument("--q", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hidden-nonlocality", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reproduce", help="closed-form CHSH and PPT table over a q grid")
    p.add_argument("--q", type=_float_list, default=[0.1, 0.25, 0.5])
    p.add_argument("--eps", type=float, default=filtering.DEFAULT_EPS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("lhv", help="run a local-model simulation against the Born rule")
    p.add_argument("--model", choices=lhv.MODELS, required=True)
    p.add_argument("--rounds", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--settings", default="random:10", help="random:K or a JSON settings file")
    p.add_argument("--q", type=float, default=None, help="model parameter (default 1/2)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lhv)

    p = sub.add_parser("construct", help="apply the POVM-locality map to a state")
    _add_state_args(p)
    p.add_argument("--sigma-a", required=True, help="ket<k>, mixed, or a single-party state file")
    p.add_argument("--sigma-b", default=None)
    p.add_argument("--one-sided", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("filter-scan", help="filtered Horodecki value versus eps")
    p.add_argument("--family", choices=("state_q", "rho_G"), required=True)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--eps", type=_float_list, default=[1e-2, 1e-3, 1e-4])
    p.add_argument("--out")
    p.set_defaults(func=cmd_filter_scan)

    p = sub.add_parser("entanglement", help="minimum eigenvalue of the partial transpose")
    _add_state_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_entanglement)

    p = sub.add_parser("chsh", help="CHSH value and Horodecki bound")
    _add_state_args(p)
    p.add_argument("--settings", default="optimal", help="optimal, canonical, or a JSON file with a1,a2,b1,b2")
    p.add_argument("--project-qubit", action="store_true", help="filter qutrit states onto the qubit block first")
    p.add_argument("--out")
    p.set_defaults(func=cmd_chsh)

    p = sub.add_parser("sequential", help="Monte Carlo of filtering followed by a CHSH test")
    _add_state_args(p)
    p.add_argument("--filters", choices=("subspace", "epsilon", "identity"), default="subspace")
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--rounds", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sequential)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (HiddenNonlocalityError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
