"""Command line front end.

Subcommands
-----------
run           solve one relaxation instance and print a report
compare       sweep degrees and block modes, tabulate optima
symmetries    print the sign-symmetry basis and block partition sizes
random-model  generate a cubic interaction network problem file
export-sdpa   write one instance in SDPA sparse format
grid          evaluate the recovered outer approximation on a grid

Problem files are JSON objects with fields ``variables`` (list of names),
``dynamics`` (one polynomial string per variable), optional ``constraints``
(polynomial strings, default: per-axis box polynomials), optional ``box``
(per-variable [lo, hi], default: [-1, 1] per axis), and an optional
``config`` block with any of d, s, l, beta, extension, mode.  Flags override
file config values, which override the built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .poly import (
    DynamicalSystem,
    Polynomial,
    PolynomialSyntaxError,
    SupportSet,
    monomial_basis,
    parse_polynomial,
)
from .relax import Box, SdpProblem, assemble, outer_approx_grid, recover
from .sdp import SdpSolution, export_sdpa, solve
from .sparsity import (
    EXTENSIONS,
    MODES,
    RelaxationConfig,
    build_chain,
    chain_dump_text,
    multiplier_basis_degree,
)
from .symmetry import sign_symmetries, symmetry_blocks
from .systems import random_network_model

RUN_CSV_HEADER = (
    "system",
    "mode",
    "d",
    "s",
    "l",
    "beta",
    "extension",
    "status",
    "objective",
    "seconds",
    "iterations",
    "lie_blocks",
    "w_blocks",
    "wv_blocks",
    "v_coeffs",
    "w_coeffs",
    "equalities",
    "primal_infeasibility",
    "dual_infeasibility",
    "relative_gap",
)

COMPARE_CSV_HEADER = (
    "system",
    "d",
    "mode",
    "s",
    "l",
    "status",
    "objective",
    "seconds",
    "iterations",
    "max_block",
    "blocks",
    "error",
)

_CONFIG_KEYS = ("d", "s", "l", "beta", "extension", "mode")
_CONFIG_DEFAULTS = {"s": 1, "l": 1, "beta": 1.0, "extension": "maximal", "mode": "ts"}


class CliError(Exception):
    """User-facing failure with an actionable message."""


@dataclass(frozen=True)
class LoadedProblem:
    name: str
    variables: tuple[str, ...]
    system: DynamicalSystem
    box: Box
    file_config: dict


def _axis_constraint(name_index: int, dim: int, lo: float, hi: float) -> Polynomial:
    """The quadratic (hi - x_i)(x_i - lo), nonnegative exactly on the slab."""
    e1 = tuple(1 if k == name_index else 0 for k in range(dim))
    e2 = tuple(2 if k == name_index else 0 for k in range(dim))
    zero = (0,) * dim
    return Polynomial.from_terms(
        dim, {e2: -1.0, e1: lo + hi, zero: -lo * hi}
    )


def load_problem(path: str) -> LoadedProblem:
    """Read and validate a problem file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read problem file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"problem file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise CliError(f"problem file {path} must contain a JSON object")

    variables = raw.get("variables")
    if not isinstance(variables, list) or not all(
        isinstance(v, str) for v in variables
    ) or not variables:
        raise CliError('"variables" must be a nonempty list of names')
    names = tuple(variables)
    if len(set(names)) != len(names):
        raise CliError('"variables" contains a duplicate name')
    n = len(names)

    dynamics = raw.get("dynamics")
    if not isinstance(dynamics, list) or len(dynamics) != n:
        raise CliError('"dynamics" must list one polynomial per variable')
    field = []
    for name, text in zip(names, dynamics):
        try:
            field.append(parse_polynomial(text, names))
        except PolynomialSyntaxError as exc:
            raise CliError(f"dynamics entry for {name}: {exc}") from exc

    box_raw = raw.get("box")
    if box_raw is None:
        box = Box.symmetric(n)
    else:
        if not isinstance(box_raw, list) or len(box_raw) != n:
            raise CliError('"box" must list one [lo, hi] pair per variable')
        try:
            box = Box.from_bounds(box_raw)
        except (TypeError, ValueError) as exc:
            raise CliError(f'invalid "box": {exc}') from exc

    constraints_raw = raw.get("constraints")
    if constraints_raw is None:
        constraints = tuple(
            _axis_constraint(i, n, box.lo[i], box.hi[i]) for i in range(n)
        )
    else:
        if not isinstance(constraints_raw, list) or not constraints_raw:
            raise CliError('"constraints" must be a nonempty list of polynomials')
        parsed = []
        for k, text in enumerate(constraints_raw):
            try:
                parsed.append(parse_polynomial(text, names))
            except PolynomialSyntaxError as exc:
                raise CliError(f"constraints[{k}]: {exc}") from exc
        constraints = tuple(parsed)

    config = raw.get("config", {})
    if not isinstance(config, dict):
        raise CliError('"config" must be an object')
    unknown = sorted(set(config) - set(_CONFIG_KEYS))
    if unknown:
        raise CliError(f'unknown config key(s) {unknown}; valid: {_CONFIG_KEYS}')

    name = raw.get("name") or path
    system = DynamicalSystem(field=tuple(field), constraints=constraints)
    return LoadedProblem(
        name=str(name),
        variables=names,
        system=system,
        box=box,
        file_config=dict(config),
    )


def resolve_config(loaded: LoadedProblem, args: argparse.Namespace) -> RelaxationConfig:
    """Merge flag, file, and default settings; flags win."""
    merged: dict = dict(_CONFIG_DEFAULTS)
    merged.update(loaded.file_config)
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if "d" not in merged:
        raise CliError(
            "no relaxation degree given: pass --d or set d in the problem "
            'file "config" block'
        )
    try:
        return RelaxationConfig(**merged)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


# -- run ---------------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    """Everything the run subcommand prints for one solved instance."""

    system: str
    config: RelaxationConfig
    chain_summary: tuple[str, ...]
    block_sizes: dict[str, tuple[int, ...]]
    v_coeffs: int
    w_coeffs: int
    equalities: int
    status: str
    objective: float
    dual_objective: float
    seconds: float
    iterations: int
    residuals: dict[str, float]
    digest: str

    def cross_check(self) -> None:
        """Verify the tabulated fields against the problem digest."""
        lines = {
            line.split(":", 1)[0]: line.split(":", 1)[1].strip()
            for line in self.digest.splitlines()
            if ":" in line
        }
        for cert, key in (("a", "a-blocks"), ("b", "b-blocks"), ("c", "c-blocks")):
            want = sorted(self.block_sizes[cert], reverse=True)
            if lines.get(key) != str(want):
                raise CliError(
                    f"report/digest mismatch for {key}: {lines.get(key)} vs {want}"
                )
        if lines.get("free") != f"v={self.v_coeffs} w={self.w_coeffs}":
            raise CliError("report/digest mismatch for free coefficient counts")
        total = sum(
            int(lines[f"equalities[{ident}]"]) for ident in ("lie", "w", "wv")
        )
        if total != self.equalities:
            raise CliError("report/digest mismatch for equality count")

    def text(self) -> str:
        cfg = self.config
        out = [
            f"system: {self.system}",
            f"config: mode={cfg.mode} 2d={2 * cfg.d} s={cfg.s} l={cfg.l} "
            f"beta={cfg.beta:g} extension={cfg.extension}",
        ]
        out.extend(self.chain_summary)
        for cert, label in (("a", "lie"), ("b", "w"), ("c", "wv")):
            sizes = sorted(self.block_sizes[cert], reverse=True)
            out.append(f"{label} blocks ({len(sizes)}): {_sizes_str(sizes)}")
        out.append(
            f"free coefficients: v={self.v_coeffs} w={self.w_coeffs}; "
            f"equalities: {self.equalities}"
        )
        out.append(f"status: {self.status}")
        out.append(f"objective: {self.objective:.9g}")
        out.append(f"dual objective: {self.dual_objective:.9g}")
        out.append(f"iterations: {self.iterations}; wall time: {self.seconds:.2f}s")
        for key in (
            "primal_infeasibility",
            "dual_infeasibility",
            "relative_gap",
        ):
            out.append(f"{key}: {self.residuals.get(key, float('nan')):.3e}")
        return "\n".join(out)

    def csv_row(self) -> tuple:
        cfg = self.config
        return (
            self.system,
            cfg.mode,
            cfg.d,
            cfg.s,
            cfg.l,
            cfg.beta,
            cfg.extension,
            self.status,
            f"{self.objective:.12g}",
            f"{self.seconds:.3f}",
            self.iterations,
            _sizes_str(sorted(self.block_sizes["a"], reverse=True)),
            _sizes_str(sorted(self.block_sizes["b"], reverse=True)),
            _sizes_str(sorted(self.block_sizes["c"], reverse=True)),
            self.v_coeffs,
            self.w_coeffs,
            self.equalities,
            f"{self.residuals.get('primal_infeasibility', float('nan')):.3e}",
            f"{self.residuals.get('dual_infeasibility', float('nan')):.3e}",
            f"{self.residuals.get('relative_gap', float('nan')):.3e}",
        )


def _sizes_str(sizes) -> str:
    return "+".join(str(s) for s in sizes) if sizes else "-"


def _chain_summary(problem: SdpProblem) -> tuple[str, ...]:
    meta = problem.metadata
    out: list[str] = []
    if "chain_supports" in meta:
        v_sizes, w_sizes = meta["chain_supports"]
        v_tail = "stabilized" if meta.get("v_stabilized") else "open"
        w_tail = "stabilized" if meta.get("w_stabilized") else "open"
        out.append(f"v-chain sizes: {list(v_sizes)} ({v_tail})")
        out.append(f"w-chain sizes: {list(w_sizes)} ({w_tail})")
    if "symmetry_rank" in meta:
        vecs = ", ".join(str(v) for v in meta.get("symmetry_basis", ()))
        out.append(f"sign-symmetry rank {meta['symmetry_rank']}: {vecs}")
    return tuple(out)


def build_run_report(
    name: str, problem: SdpProblem, solution: SdpSolution, seconds: float
) -> RunReport:
    blocks: dict[str, list[int]] = {"a": [], "b": [], "c": []}
    for blk in problem.blocks:
        blocks[blk.certificate].append(blk.dimension)
    v_coeffs = sum(1 for kind, _ in problem.free_labels if kind == "v")
    report = RunReport(
        system=name,
        config=problem.config,
        chain_summary=_chain_summary(problem),
        block_sizes={k: tuple(v) for k, v in blocks.items()},
        v_coeffs=v_coeffs,
        w_coeffs=len(problem.free_labels) - v_coeffs,
        equalities=len(problem.equalities),
        status=solution.status,
        objective=solution.objective,
        dual_objective=solution.dual_objective,
        seconds=seconds,
        iterations=solution.iterations,
        residuals=dict(solution.residuals),
        digest=problem.digest(),
    )
    report.cross_check()
    return report


def _append_csv(path: str, header: tuple, rows: list[tuple]) -> None:
    try:
        new = True
        try:
            with open(path, "r", encoding="utf-8") as fh:
                new = fh.read(1) == ""
        except FileNotFoundError:
            pass
        with open(path, "a", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from exc


def cmd_run(args: argparse.Namespace) -> int:
    loaded = load_problem(args.problem)
    config = resolve_config(loaded, args)
    try:
        problem = assemble(loaded.system, loaded.box, config)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    if args.dump_chains:
        chain = build_chain(
            loaded.system,
            config.d,
            s=config.s,
            l=config.l,
            extension=config.extension,
        )
        print(chain_dump_text(chain, loaded.variables))

    t0 = time.perf_counter()
    solution = solve(problem)
    seconds = time.perf_counter() - t0
    report = build_run_report(loaded.name, problem, solution, seconds)
    print(report.text())

    cert = recover(problem, solution.block_values, solution.free_values)
    for flag in cert.flags:
        print(f"warning: {flag}", file=sys.stderr)

    if args.out_csv:
        _append_csv(args.out_csv, RUN_CSV_HEADER, [report.csv_row()])
    if args.export_sdpa:
        try:
            with open(args.export_sdpa, "w", encoding="utf-8") as fh:
                fh.write(export_sdpa(problem))
        except OSError as exc:
            raise CliError(f"cannot write {args.export_sdpa}: {exc}") from exc
    if args.grid:
        _write_grid(args.grid, loaded, cert.w, args.resolution)
    return 0


# -- compare -----------------------------------------------------------------


def _compare_cell(payload: tuple) -> tuple:
    """One sweep cell; module level so process pools can pickle it."""
    path, name, d, mode, s, l, beta, extension = payload
    try:
        loaded = load_problem(path)
        config = RelaxationConfig(
            d=d, s=s, l=l, beta=beta, extension=extension, mode=mode
        )
        problem = assemble(loaded.system, loaded.box, config)
        t0 = time.perf_counter()
        solution = solve(problem)
        seconds = time.perf_counter() - t0
        dims = sorted((b.dimension for b in problem.blocks), reverse=True)
        return (
            name,
            d,
            mode,
            config.s,
            config.l,
            solution.status,
            f"{solution.objective:.12g}",
            f"{seconds:.3f}",
            solution.iterations,
            dims[0],
            len(dims),
            "",
        )
    except Exception as exc:
        return (name, d, mode, s, l, "error", "", "", "", "", "", str(exc))


def _parse_int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise CliError(f"{flag} expects a comma-separated integer list") from exc
    if not values:
        raise CliError(f"{flag} expects at least one value")
    return values


def cmd_compare(args: argparse.Namespace) -> int:
    loaded = load_problem(args.problem)
    merged_cfg = dict(_CONFIG_DEFAULTS)
    merged_cfg.update(loaded.file_config)
    s = args.s if args.s is not None else merged_cfg.get("s", 1)
    l = args.l if args.l is not None else merged_cfg.get("l", 1)
    beta = args.beta if args.beta is not None else merged_cfg.get("beta", 1.0)
    extension = (
        args.extension
        if args.extension is not None
        else merged_cfg.get("extension", "maximal")
    )
    if args.d is not None:
        d_values = _parse_int_list(args.d, "--d")
    elif "d" in merged_cfg:
        d_values = (int(merged_cfg["d"]),)
    else:
        raise CliError("no relaxation degree given: pass --d")
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    for mode in modes:
        if mode not in MODES:
            raise CliError(f"unknown mode {mode!r}; valid: {MODES}")

    cells = [
        (args.problem, loaded.name, d, mode, s, l, beta, extension)
        for d in d_values
        for mode in modes
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_compare_cell, cells))
    else:
        rows = [_compare_cell(cell) for cell in cells]

    print(_aligned_table(COMPARE_CSV_HEADER, rows))
    failures = [row for row in rows if row[-1]]
    for row in failures:
        print(
            f"warning: cell d={row[1]} mode={row[2]} failed: {row[-1]}",
            file=sys.stderr,
        )
    if args.out_csv:
        _append_csv(args.out_csv, COMPARE_CSV_HEADER, rows)
    return 1 if len(failures) == len(rows) else 0


def _aligned_table(header: tuple, rows: list[tuple]) -> str:
    table = [tuple(str(v) for v in header)] + [
        tuple(str(v) for v in row) for row in rows
    ]
    widths = [max(len(row[k]) for row in table) for k in range(len(header))]
    lines = []
    for row in table:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


# -- symmetries --------------------------------------------------------------


def cmd_symmetries(args: argparse.Namespace) -> int:
    loaded = load_problem(args.problem)
    config = resolve_config(loaded, args)
    group = sign_symmetries(loaded.system, config.d)
    print(f"sign-symmetry group rank: {group.rank}")
    for vec in group.vectors:
        print("  r = " + "".join(str(b) for b in vec))
    degrees = (0,) + loaded.system.constraint_degrees
    for j, dj in enumerate(degrees):
        basis = SupportSet.of(
            loaded.system.dim,
            monomial_basis(loaded.system.dim, multiplier_basis_degree(config.d, dj)),
        )
        sizes = sorted((len(b) for b in symmetry_blocks(group, basis)), reverse=True)
        label = "1" if j == 0 else f"g{j}"
        print(f"multiplier {label} (degree {dj}): block sizes {sizes}")
    return 0


# -- random-model ------------------------------------------------------------


def cmd_random_model(args: argparse.Namespace) -> int:
    if args.n < 5:
        raise CliError("n must be at least 5 so the graph has n-4 >= 1 edges")
    model = random_network_model(args.n, args.seed)
    names = model.variables
    payload = {
        "name": model.name,
        "variables": list(names),
        "dynamics": [p.to_string(names) for p in model.system.field],
        "constraints": [p.to_string(names) for p in model.system.constraints],
        "box": [[lo, hi] for lo, hi in model.bounds],
        "metadata": {
            "seed": model.seed,
            "edges": [list(e) for e in model.edges],
            "interaction_matrix": [list(row) for row in model.matrix],
            "rejected_draws": model.attempts - 1,
        },
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc}") from exc
    else:
        print(text)
    return 0


# -- export-sdpa and grid ----------------------------------------------------


def cmd_export_sdpa(args: argparse.Namespace) -> int:
    loaded = load_problem(args.problem)
    config = resolve_config(loaded, args)
    try:
        problem = assemble(loaded.system, loaded.box, config)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    text = export_sdpa(problem)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return 0


def _write_grid(path: str, loaded: LoadedProblem, w, resolution_text: str) -> None:
    resolution = _parse_int_list(resolution_text, "--resolution")
    res = resolution[0] if len(resolution) == 1 else resolution
    try:
        points, values = outer_approx_grid(w, loaded.box, res)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(list(loaded.variables) + ["w"])
    for point, value in zip(points, values):
        writer.writerow([f"{x:.12g}" for x in point] + [f"{value:.12g}"])
    if path == "-":
        sys.stdout.write(buf.getvalue())
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from exc


def cmd_grid(args: argparse.Namespace) -> int:
    loaded = load_problem(args.problem)
    config = resolve_config(loaded, args)
    try:
        problem = assemble(loaded.system, loaded.box, config)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    solution = solve(problem)
    cert = recover(problem, solution.block_values, solution.free_values)
    for flag in cert.flags:
        print(f"warning: {flag}", file=sys.stderr)
    _write_grid(args.out, loaded, cert.w, args.resolution)
    return 0


# -- argument plumbing -------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d", type=int, default=None, help="relaxation half-degree")
    parser.add_argument("--s", type=int, default=None, help="v-chain sparse order")
    parser.add_argument("--l", type=int, default=None, help="w-chain sparse order")
    parser.add_argument(
        "--mode", choices=MODES, default=None, help="block structure mode"
    )
    parser.add_argument(
        "--extension",
        choices=EXTENSIONS,
        default=None,
        help="chordal extension rule",
    )
    parser.add_argument("--beta", type=float, default=None, help="discount rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpisos",
        description="Semidefinite outer approximations of maximum "
        "positively invariant sets for polynomial dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve one relaxation instance")
    p_run.add_argument("problem", help="problem file (JSON)")
    _add_config_flags(p_run)
    p_run.add_argument("--out-csv", default=None, help="append a CSV report row")
    p_run.add_argument(
        "--export-sdpa", default=None, help="also write the instance in SDPA format"
    )
    p_run.add_argument(
        "--grid", default=None, help="write the outer-approximation grid CSV here"
    )
    p_run.add_argument(
        "--resolution", default="65", help="grid points per axis (int or comma list)"
    )
    p_run.add_argument(
        "--dump-chains",
        action="store_true",
        help="print the support chain iterates before solving",
    )
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="sweep degrees and modes")
    p_cmp.add_argument("problem", help="problem file (JSON)")
    p_cmp.add_argument(
        "--d", default=None, help="comma-separated relaxation half-degrees"
    )
    p_cmp.add_argument(
        "--modes", default="ts,ss,fd", help="comma-separated modes to compare"
    )
    p_cmp.add_argument("--s", type=int, default=None, help="v-chain sparse order")
    p_cmp.add_argument("--l", type=int, default=None, help="w-chain sparse order")
    p_cmp.add_argument("--beta", type=float, default=None, help="discount rate")
    p_cmp.add_argument(
        "--extension", choices=EXTENSIONS, default=None, help="chordal extension rule"
    )
    p_cmp.add_argument("--jobs", type=int, default=1, help="parallel cell limit")
    p_cmp.add_argument("--out-csv", default=None, help="append CSV rows here")
    p_cmp.set_defaults(func=cmd_compare)

    p_sym = sub.add_parser(
        "symmetries", help="print sign symmetries and block partitions"
    )
    p_sym.add_argument("problem", help="problem file (JSON)")
    _add_config_flags(p_sym)
    p_sym.set_defaults(func=cmd_symmetries)

    p_rnd = sub.add_parser("random-model", help="generate a network problem file")
    p_rnd.add_argument("n", type=int, help="number of variables (at least 5)")
    p_rnd.add_argument("seed", type=int, help="RNG seed, recorded in the file")
    p_rnd.add_argument("--out", default=None, help="output path (default stdout)")
    p_rnd.set_defaults(func=cmd_random_model)

    p_exp = sub.add_parser("export-sdpa", help="write SDPA sparse format")
    p_exp.add_argument("problem", help="problem file (JSON)")
    _add_config_flags(p_exp)
    p_exp.add_argument("--out", default=None, help="output path (default stdout)")
    p_exp.set_defaults(func=cmd_export_sdpa)

    p_grid = sub.add_parser("grid", help="solve and grid the outer approximation")
    p_grid.add_argument("problem", help="problem file (JSON)")
    _add_config_flags(p_grid)
    p_grid.add_argument(
        "--resolution", default="65", help="grid points per axis (int or comma list)"
    )
    p_grid.add_argument("--out", default="-", help="output path (default stdout)")
    p_grid.set_defaults(func=cmd_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
