"""Command-line front end with bit-stable file output.

Numbers are written with 17 significant digits so every value round-trips
exactly through the decimal form. Exit codes: 0 success, 1 verification
failure, 2 invalid input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .bloch import BlochState, RelaxationPair, normalize_params
from .ernst import ernst_solution, q_max_surface
from .errors import BallEscapeError, DomainError, SpinSnrError
from .oracle import run_verification
from .qsurface import build_trajectory, q_lattice_arrays, q_value
from .synthesis import ControlStructure, boundary_curves, magic_plane, regime

SCHEMA_TAG = "# spin-snr-synth v1"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


_NUM_NAMES = {"pi": math.pi, "e": math.e}


def parse_number(text: str) -> float:
    """Parse a float or a small arithmetic expression ("2*pi/1.8", "2π").

    A digit directly followed by pi/e multiplies implicitly.
    """
    s = text.strip().replace("π", "pi")
    s = re.sub(r"(\d)\s*(pi|e)\b", r"\1*\2", s)
    try:
        node = ast.parse(s, mode="eval").body
        return float(_eval_node(node))
    except (SyntaxError, ValueError, TypeError) as exc:
        raise DomainError(f"cannot parse number {text!r}: {exc}") from None


def _eval_node(node: ast.AST) -> float:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _NUM_NAMES:
        return _NUM_NAMES[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and isinstance(
        node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
    ):
        a, b = _eval_node(node.left), _eval_node(node.right)
        return {
            ast.Add: lambda: a + b,
            ast.Sub: lambda: a - b,
            ast.Mult: lambda: a * b,
            ast.Div: lambda: a / b,
            ast.Pow: lambda: a**b,
        }[type(node.op)]()
    raise ValueError(f"unsupported expression element {ast.dump(node)}")


def thread_cap() -> int:
    """Worker cap from SPIN_SNR_THREADS (default: cpu count)."""
    raw = os.environ.get("SPIN_SNR_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise DomainError(f"SPIN_SNR_THREADS must be an integer, got {raw!r}")
        if n < 1:
            raise DomainError(f"SPIN_SNR_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--Gamma", type=parse_number, help="normalized transverse rate 2*pi*Td/T2")
    p.add_argument("--gamma", type=parse_number, help="normalized longitudinal rate 2*pi*Td/T1")
    p.add_argument("--T1", type=parse_number, help="longitudinal relaxation time (physical)")
    p.add_argument("--T2", type=parse_number, help="transverse relaxation time (physical)")
    p.add_argument("--Td", type=parse_number, help="detection duration (physical)")
    p.add_argument(
        "--allow-unphysical",
        action="store_true",
        help="accept rate pairs with 2*Gamma < gamma (T2 > 2*T1)",
    )


def resolve_params(args: argparse.Namespace) -> RelaxationPair:
    normalized = [args.Gamma, args.gamma]
    physical = [args.T1, args.T2, args.Td]
    if any(v is not None for v in normalized) and any(v is not None for v in physical):
        raise DomainError("give either --Gamma/--gamma or --T1/--T2/--Td, not both")
    if all(v is not None for v in normalized):
        return RelaxationPair(args.Gamma, args.gamma, allow_unphysical=args.allow_unphysical)
    if all(v is not None for v in physical):
        return normalize_params(args.T1, args.T2, args.Td, allow_unphysical=args.allow_unphysical)
    raise DomainError("parameters required: --Gamma and --gamma, or --T1, --T2 and --Td")


def _state_dict(s: BlochState) -> dict:
    return {"y": s.y, "z": s.z}


def cmd_ernst(args: argparse.Namespace) -> int:
    params = resolve_params(args)
    sol = ernst_solution(params)
    tag = regime(params).value
    if args.format == "json":
        payload = {
            "params": {"Gamma": params.gamma_t2, "gamma": params.gamma_t1},
            "regime": tag,
            "m": _state_dict(sol.m),
            "s": _state_dict(sol.s),
            "flip_rad": sol.flip,
            "flip_deg": math.degrees(sol.flip),
            "q": sol.q,
        }
        _emit(args.out, json.dumps(payload, indent=2) + "\n")
    else:
        lines = [
            "optimal steady-state cycle (Ernst solution)",
            f"  Gamma = {_fmt(params.gamma_t2)}   gamma = {_fmt(params.gamma_t1)}   regime {tag}",
            f"  M  = ({_fmt(sol.m.y)}, {_fmt(sol.m.z)})",
            f"  S  = ({_fmt(sol.s.y)}, {_fmt(sol.s.z)})",
            f"  flip = {_fmt(sol.flip)} rad ({sol.flip * 180.0 / math.pi:.6f} deg)",
            f"  Q  = {_fmt(sol.q)}",
        ]
        _emit(args.out, "\n".join(lines) + "\n")
    return 0


def _grid_rows(params: RelaxationPair, n_y: int, n_z: int, workers: int):
    y_axis = np.linspace(0.0, 1.0, n_y)
    z_axis = np.linspace(-1.0, 1.0, n_z)
    if workers <= 1 or n_y < 4 * workers:
        return q_lattice_arrays(params, y_axis, z_axis)
    blocks = np.array_split(y_axis, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda blk: q_lattice_arrays(params, blk, z_axis), blocks))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(5))


def cmd_qsurface(args: argparse.Namespace) -> int:
    params = resolve_params(args)
    if args.grid_ny < 2 or args.grid_nz < 2:
        raise DomainError("grid resolution must be >= 2")
    y, z, codes, t_c, q = _grid_rows(params, args.grid_ny, args.grid_nz, thread_cap())
    structures = tuple(ControlStructure)
    curves = boundary_curves(params, args.boundary_n)

    boundary_rows = []
    for name, arr in (
        ("ernst_ellipsoid", curves.ernst_ellipsoid),
        ("magic_radius_circle", curves.magic_radius_circle),
        ("magic_radius_preimage", curves.magic_radius_preimage),
    ):
        for yy, zz in arr:
            if yy < 0.0 or yy * yy + zz * zz >= 1.0:
                continue
            sample = q_value(BlochState(float(yy), float(zz)), params)
            boundary_rows.append((name, sample))

    plane = magic_plane(params)
    meta = {
        "schema": SCHEMA_TAG.lstrip("# "),
        "params": {"Gamma": params.gamma_t2, "gamma": params.gamma_t1},
        "regime": regime(params).value,
        "magic_plane": {"z0": plane.z0, "present": plane.present},
        "resolution": {"n_y": args.grid_ny, "n_z": args.grid_nz},
        "n_lattice_rows": int(len(y)),
        "n_boundary_rows": len(boundary_rows),
        "boundaries": {
            "ernst_ellipsoid": curves.ernst_ellipsoid.tolist(),
            "magic_radius_circle": curves.magic_radius_circle.tolist(),
            "magic_radius_preimage": curves.magic_radius_preimage.tolist(),
        },
    }

    if args.format == "json":
        meta["samples"] = [
            {"y": yi, "z": zi, "structure": structures[ci].value, "t_control": ti, "q": qi}
            for yi, zi, ci, ti, qi in zip(
                y.tolist(), z.tolist(), codes.tolist(), t_c.tolist(), q.tolist()
            )
        ]
        _write_text(args.out, json.dumps(meta, indent=2) + "\n")
        return 0

    lines = [SCHEMA_TAG, "# lattice rows (row-major), then boundary-curve rows", "y,z,structure,t_control,q"]
    for yi, zi, ci, ti, qi in zip(
        y.tolist(), z.tolist(), codes.tolist(), t_c.tolist(), q.tolist()
    ):
        lines.append(
            f"{_fmt(yi)},{_fmt(zi)},{structures[ci].value},{_fmt(ti)},{_fmt(qi)}"
        )
    for _, sample in boundary_rows:
        lines.append(
            f"{_fmt(sample.m.y)},{_fmt(sample.m.z)},{sample.structure.value},"
            f"{_fmt(sample.t_control)},{_fmt(sample.q)}"
        )
    _write_text(args.out, "\n".join(lines) + "\n")
    _write_text(_sidecar_path(args.out), json.dumps(meta, indent=2) + "\n")
    return 0


def _point_report(args: argparse.Namespace) -> int:
    params = resolve_params(args)
    y, z = args.point
    m = BlochState(y, z)  # raises DomainError outside the closed disk
    sample = q_value(m, params)
    traj = build_trajectory(m, params)
    plane = magic_plane(params)
    seg_payload = []
    for seg in traj.segments:
        seg_payload.append(
            {
                "kind": seg.kind,
                "start": _state_dict(seg.start),
                "end": _state_dict(seg.end),
                "duration": seg.duration,
                "flip": seg.flip,
                "polyline": seg.polyline(args.polyline_n).tolist(),
            }
        )
    payload = {
        "params": {"Gamma": params.gamma_t2, "gamma": params.gamma_t1},
        "m": _state_dict(m),
        "s": _state_dict(traj.s),
        "structure": sample.structure.value,
        "r_m": m.r,
        "r_s": traj.s.r,
        "z0": plane.z0,
        "t_control": sample.t_control,
        "q": sample.q,
        "segments": seg_payload,
    }
    if args.format == "json":
        _emit(args.out, json.dumps(payload, indent=2) + "\n")
        return 0
    lines = [
        f"measurement point M = ({_fmt(m.y)}, {_fmt(m.z)})",
        f"  structure = {sample.structure.value}",
        f"  r_m = {_fmt(m.r)}   r_s = {_fmt(traj.s.r)}   z0 = "
        + ("-" if plane.z0 is None else _fmt(plane.z0)),
        f"  T_c = {_fmt(sample.t_control)}   Q = {_fmt(sample.q)}",
        "  segments:",
    ]
    for seg in traj.segments:
        extra = f" flip={_fmt(seg.flip)} rad" if seg.flip is not None else ""
        lines.append(
            f"    {seg.kind:10s} ({_fmt(seg.start.y)}, {_fmt(seg.start.z)}) -> "
            f"({_fmt(seg.end.y)}, {_fmt(seg.end.z)}) duration={_fmt(seg.duration)}{extra}"
        )
    _emit(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_phase_diagram(args: argparse.Namespace) -> int:
    g_lo, g_hi = args.range_gamma
    bg_lo, bg_hi = args.range_Gamma
    surface = q_max_surface((g_lo, g_hi), (bg_lo, bg_hi), (args.grid_ny, args.grid_nz))
    meta = {
        "schema": SCHEMA_TAG.lstrip("# "),
        "range_gamma": [g_lo, g_hi],
        "range_Gamma": [bg_lo, bg_hi],
        "resolution": {"n_gamma": args.grid_ny, "n_Gamma": args.grid_nz},
        "boundaries": {
            "gamma": surface.gamma.tolist(),
            "Gamma_ab": surface.gamma_ab.tolist(),
            "Gamma_bc": surface.gamma_bc.tolist(),
            "Gamma_physical": surface.gamma_phys.tolist(),
        },
    }
    if args.format == "json":
        meta["cells"] = [
            {
                "gamma": float(surface.gamma[i]),
                "Gamma": float(surface.big_gamma[j]),
                "q_ernst": None if not surface.physical[i, j] else float(surface.q[i, j]),
                "regime": str(surface.regimes[i, j]),
                "physical": bool(surface.physical[i, j]),
            }
            for i in range(len(surface.gamma))
            for j in range(len(surface.big_gamma))
        ]
        _write_text(args.out, json.dumps(meta, indent=2) + "\n")
        return 0
    lines = [SCHEMA_TAG, "gamma,Gamma,q_ernst,regime,physical"]
    for i in range(len(surface.gamma)):
        for j in range(len(surface.big_gamma)):
            lines.append(
                f"{_fmt(surface.gamma[i])},{_fmt(surface.big_gamma[j])},"
                f"{_fmt(surface.q[i, j])},{surface.regimes[i, j]},"
                f"{1 if surface.physical[i, j] else 0}"
            )
    _write_text(args.out, "\n".join(lines) + "\n")
    _write_text(_sidecar_path(args.out), json.dumps(meta, indent=2) + "\n")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    params = resolve_params(args)
    report = run_verification(
        params,
        seed=args.seed,
        n_transfers=args.n_transfers,
        n_structure=args.n_structure,
        n_qsurface=args.n_qsurface,
        bang_amplitude=args.amplitude,
        q_bias=args.inject_q_bias,
    )
    doc = json.dumps(report.to_dict(), indent=2) + "\n"
    if args.out:
        _write_text(args.out, doc)
    if args.format == "json":
        sys.stdout.write(doc)
    else:
        for c in report.checks:
            status = "pass" if c.passed else "FAIL"
            print(f"  [{status}] {c.name}: measured {c.measured:.3e} (tolerance {c.tolerance:.0e})")
        print("verification " + ("PASSED" if report.passed else "FAILED"))
    return 0 if report.passed else 1


def _sidecar_path(path: str) -> str:
    root, ext = os.path.splitext(path)
    return (root if ext else path) + ".meta.json"


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _emit(path: str | None, text: str) -> None:
    if path:
        _write_text(path, text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spin-snr-synth",
        description="Steady-state SNR-per-unit-time synthesis for a pulsed spin-1/2 ensemble.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ernst = sub.add_parser("ernst", help="closed-form optimal steady state and flip angle")
    _add_param_flags(p_ernst)
    p_ernst.add_argument("--format", choices=("text", "json"), default="text")
    p_ernst.add_argument("--out", default=None, help="write the report here instead of stdout")
    p_ernst.set_defaults(func=cmd_ernst)

    p_q = sub.add_parser("qsurface", help="Q over the half-disk lattice, as CSV + JSON sidecar")
    _add_param_flags(p_q)
    p_q.add_argument("--grid-ny", type=int, default=512)
    p_q.add_argument("--grid-nz", type=int, default=512)
    p_q.add_argument("--boundary-n", type=int, default=256, help="samples per boundary curve")
    p_q.add_argument("--format", choices=("csv", "json"), default="csv")
    p_q.add_argument("--out", default="qsurface.csv")
    p_q.set_defaults(func=cmd_qsurface)

    for name, help_text in (
        ("classify", "structure, times and optimal trajectory for one M point"),
        ("trajectory", "alias of classify (optimal-trajectory polyline output)"),
    ):
        p_c = sub.add_parser(name, help=help_text)
        _add_param_flags(p_c)
        p_c.add_argument("--point", type=parse_number, nargs=2, required=True, metavar=("Y", "Z"))
        p_c.add_argument("--polyline-n", type=int, default=64)
        p_c.add_argument("--format", choices=("text", "json"), default="text")
        p_c.add_argument("--out", default=None)
        p_c.set_defaults(func=_point_report)

    p_pd = sub.add_parser("phase-diagram", help="optimal Q and regimes over the rate plane")
    p_pd.add_argument("--range-gamma", type=parse_number, nargs=2, default=[0.1, 2.0], metavar=("LO", "HI"))
    p_pd.add_argument("--range-Gamma", type=parse_number, nargs=2, default=[0.1, 3.0], metavar=("LO", "HI"))
    p_pd.add_argument("--grid-ny", type=int, default=64, help="gamma axis resolution")
    p_pd.add_argument("--grid-nz", type=int, default=64, help="Gamma axis resolution")
    p_pd.add_argument("--format", choices=("csv", "json"), default="csv")
    p_pd.add_argument("--out", default="phase_diagram.csv")
    p_pd.set_defaults(func=cmd_phase_diagram)

    p_v = sub.add_parser("verify", help="run the ODE-oracle suite against the closed forms")
    _add_param_flags(p_v)
    p_v.add_argument("--seed", type=int, default=12345)
    p_v.add_argument("--n-transfers", type=int, default=100)
    p_v.add_argument("--n-structure", type=int, default=200)
    p_v.add_argument("--n-qsurface", type=int, default=200)
    p_v.add_argument("--amplitude", type=parse_number, default=1e4)
    p_v.add_argument("--inject-q-bias", type=parse_number, default=0.0, help=argparse.SUPPRESS)
    p_v.add_argument("--format", choices=("text", "json"), default="text")
    p_v.add_argument("--out", default=None, help="also write the JSON report here")
    p_v.set_defaults(func=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, BallEscapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except SpinSnrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
