"""Command-line front end.

Exit codes: 0 ok, 1 input error, 2 infeasible design, 3 trial path
inconsistent with the boundaries.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from gsdmix import asymptotics, design as design_mod, estimation, simulation, sub_density
from gsdmix.design import DesignSpec, InfeasibleDesignError, SpecError
from gsdmix.sub_density import Design, DesignError

EXIT_INPUT, EXIT_INFEASIBLE, EXIT_PATH = 1, 2, 3

log = logging.getLogger("gsdmix")


class InputError(Exception):
    pass


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(rows: list[dict], out, columns: list[str] | None = None) -> None:
    """CSV with a header row always present and floats at 17 significant digits."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    handle = open(out, "w", newline="") if out not in (None, "-") else sys.stdout
    try:
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    finally:
        if handle is not sys.stdout:
            handle.close()


def write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, allow_nan=True)
    if out in (None, "-"):
        print(text)
    else:
        Path(out).write_text(text + "\n")


def read_design_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be an object")
    return data


def _json_float(x):
    return math.inf if x in ("inf", "Infinity") else (-math.inf if x in ("-inf", "-Infinity") else x)


def spec_from_dict(data: dict) -> DesignSpec:
    if "alternatives" not in data:
        raise InputError("design file needs 'alternatives'")
    alts = data["alternatives"]
    k = data.get("k", len(alts))
    if k != len(alts):
        raise InputError(f"k={k} but {len(alts)} alternatives given")
    try:
        return DesignSpec(
            alpha=float(data.get("alpha", 0.05)),
            power=float(data.get("power", 0.8)),
            alternatives=tuple(alts),
            alpha_k=tuple(data["alpha_k"]) if data.get("alpha_k") is not None else None,
            alpha0_override=data.get("alpha0_override"),
        )
    except SpecError as exc:
        raise InputError(str(exc)) from exc


def design_from_dict(data: dict) -> Design:
    """Boundaries when present, otherwise solve from the alternatives."""
    b = data.get("boundaries")
    if b is not None:
        try:
            n, c = b["n"], [_json_float(x) for x in b["c"]]
        except (KeyError, TypeError) as exc:
            raise InputError("boundaries must be an object with 'n' and 'c'") from exc
        k = data.get("k", len(n))
        if len(n) != k or len(c) != k:
            raise InputError(f"boundaries must have k={k} entries")
        try:
            return Design(tuple(n), tuple(c))
        except DesignError as exc:
            raise InputError(str(exc)) from exc
    if "alternatives" in data:
        return design_mod.solve_design(spec_from_dict(data)).design
    raise InputError("design file needs 'boundaries' or 'alternatives'")


def parse_grid(text: str) -> list[float]:
    """``"a,b,c"`` or ``"lo:hi:num"`` (inclusive linspace)."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InputError(f"grid {text!r} must be lo:hi:num")
        lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
        return list(np.linspace(lo, hi, num))
    return [float(x) for x in text.split(",") if x.strip()]


def _grid_arg(values) -> list[float]:
    out: list[float] = []
    for v in values or []:
        out.extend(parse_grid(v))
    return out


# --- commands -------------------------------------------------------------


def cmd_design(args) -> int:
    data = read_design_file(args.spec)
    spec = spec_from_dict(data)
    solved = design_mod.solve_design(spec, cap=args.cap)
    report = design_mod.validate_design(solved.design, spec)
    out = dict(data)
    out["k"] = spec.K
    out["boundaries"] = solved.design.to_dict()
    out["stage_alphas"] = list(solved.stage_alphas)
    out["validation"] = report.to_dict()
    out["oc"] = solved.oc
    write_json(out, args.out)
    if args.oc_csv:
        write_csv(solved.oc, args.oc_csv)
    return 0


OC_COLUMNS = ["theta", "stage", "reject_prob_stagewise", "reject_prob_cumulative", "stop_prob", "expected_N", "method"]


def cmd_oc(args) -> int:
    thetas = _grid_arg(args.theta)
    if not thetas:
        raise InputError("--theta needs at least one value")
    design = design_from_dict(read_design_file(args.design))
    rows = []
    for th in thetas:
        if args.method == "quad":
            part = design_mod.oc_summary(design, [th])
        else:
            res = simulation.run_oc(simulation.SimConfig(design, th, args.reps, args.seed), workers=args.workers)
            part = simulation.oc_rows(design, res)
        for r in part:
            r["method"] = args.method
        rows.extend(part)
    write_csv(rows, args.out, OC_COLUMNS)
    return 0


def read_stage_data(path) -> list[tuple[int, int, float]]:
    rows = []
    try:
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or not "".join(rec).strip() or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((int(rec[0]), int(rec[1]), float(rec[2])))
                except (ValueError, IndexError):
                    if rows:
                        raise InputError(f"{path}: bad row {rec!r}")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no stage rows")
    return rows


def outcome_from_rows(design: Design, rows) -> estimation.TrialOutcome:
    for i, (stage, n, _) in enumerate(rows, start=1):
        if stage != i:
            raise InputError(f"stage rows must be numbered 1..k in order, got {stage} at row {i}")
        if i > design.K:
            raise estimation.PathError(i, f"design has only {design.K} stages")
        if n != design.n[i - 1]:
            raise InputError(f"stage {i}: n={n} does not match design n_{i}={design.n[i - 1]}")
    return estimation.TrialOutcome.from_stage_means(design, [m for _, _, m in rows])


def cmd_estimate(args) -> int:
    design = design_from_dict(read_design_file(args.design))
    outcome = outcome_from_rows(design, read_stage_data(args.data))
    k = outcome.stop_stage
    unc = estimation.mle_unconditional(outcome)
    con = estimation.mle_conditional(outcome)
    try:
        info = estimation.observed_info(outcome, unc.estimate)
        info_obj = {"I_obs": info[0], "I_obs_c": info[1], "I_obs_fix": info[2]}
    except estimation.UnderflowError as exc:
        info_obj = {"error": str(exc)}
    crossed = outcome.cumulative_z[-1] > design.c[k - 1]
    out = {
        "stop_stage": k,
        "cumulative_z": list(outcome.cumulative_z),
        "decision": f"reject at stage {k}" if crossed else f"do not reject at final stage {k}",
        "theta_hat": unc.estimate,
        "theta_hat_c": con.estimate,
        "diverged": con.diverged,
        "search_bracket": list(con.search_bracket),
        "info_observed": info_obj,
    }
    write_json(out, args.out)
    return 0


def cmd_monitor(args) -> int:
    design = design_from_dict(read_design_file(args.design))
    zs = _grid_arg(args.z)
    if not zs:
        raise InputError("--z needs at least one value")
    if len(zs) > design.K:
        raise estimation.PathError(design.K + 1, f"design has only {design.K} stages")
    stages = []
    for k, z in enumerate(zs, start=1):
        c = design.c[k - 1]
        if stages and stages[-1]["decision"] != "continue":
            raise estimation.PathError(k, "trial already stopped")
        if z > c:
            decision = "stop: reject H0"
        elif k == design.K:
            decision = "stop: do not reject H0"
        else:
            decision = "continue"
        stages.append({"stage": k, "z": z, "c": c, "n_cumulative": float(design.cum_n[k - 1]), "decision": decision})
    write_json({"stages": stages, "decision": stages[-1]["decision"]}, args.out)
    return 0


def cmd_info(args) -> int:
    design = design_from_dict(read_design_file(args.design))
    thetas = _grid_arg(args.theta_grid)
    if not thetas:
        raise InputError("--theta-grid needs at least one value")
    rows = [estimation.expected_info(design, th).row() for th in thetas]
    write_csv(rows, args.out)
    return 0


def cmd_asymcdf(args) -> int:
    design = design_from_dict(read_design_file(args.design))
    vs = _grid_arg(args.v_grid)
    if not vs:
        raise InputError("--v-grid needs at least one value")
    spec = asymptotics.LocalAltSpec.from_design(design, args.h)
    comps = asymptotics.mixture_cdf_k_stage(spec, vs, components=True)
    rows = []
    for v, comp in zip(vs, comps):
        row = {"v": v}
        row.update({f"cdf_component_{k + 1}": comp[k] for k in range(design.K)})
        row["cdf_total"] = comp.sum()
        rows.append(row)
    write_csv(rows, args.out)
    return 0


def cmd_convergence(args) -> int:
    design = design_from_dict(read_design_file(args.design))
    vs = _grid_arg(args.v_grid)
    scales = [int(s) for s in _grid_arg(args.scales)]
    if not vs or not scales:
        raise InputError("--v-grid and --scales need values")
    rows = asymptotics.convergence_check(design, args.h, scales, vs, increments=args.increments, reps=args.reps, seed=args.seed)
    write_csv(rows, args.out)
    return 0


def cmd_estimators(args) -> int:
    design = design_from_dict(read_design_file(args.design))
    thetas = _grid_arg(args.theta)
    if not thetas:
        raise InputError("--theta needs at least one value")
    rows, hist = [], []
    for th in thetas:
        res = simulation.run_estimator_study(simulation.SimConfig(design, th, args.reps, args.seed), workers=args.workers)
        for est in ("unconditional", "conditional"):
            table = res.moments(est)
            for s in table.stages:
                for measure, value, se in (("bias", s.bias, s.bias_se), ("sd", s.sd, s.sd_se), ("mse", s.mse, s.mse_se)):
                    rows.append(
                        {
                            "theta": th,
                            "estimator": est,
                            "stage": s.stage,
                            "measure": measure,
                            "value": value,
                            "mc_se": se,
                            "count": s.count,
                            "diverged_rate": s.diverged_rate,
                        }
                    )
        if args.hist:
            samples = res.estimator_samples
            for k in range(1, design.K + 1):
                at_k = samples["stop_stage"] == k
                for est, key, keep in (
                    ("unconditional", "theta_hat", at_k),
                    ("conditional", "theta_hat_c", at_k & ~samples["diverged"]),
                ):
                    for left, right, count in simulation.histogram_rows(samples[key][keep], bins=args.bins):
                        hist.append({"theta": th, "estimator": est, "stage": k, "bin_left": left, "bin_right": right, "count": count})
    write_csv(rows, args.out)
    if args.hist:
        write_csv(hist, args.hist, ["theta", "estimator", "stage", "bin_left", "bin_right", "count"])
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; 2 is reserved for infeasible designs
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gsdmix", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("design", help="solve stage sizes and critical values")
    s.add_argument("spec")
    s.add_argument("-o", "--out")
    s.add_argument("--oc-csv")
    s.add_argument("--cap", type=int, default=design_mod.DEFAULT_N_CAP)
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("oc", help="operating characteristics")
    s.add_argument("design")
    s.add_argument("--theta", action="append", help="comma list or lo:hi:num; repeatable")
    s.add_argument("--method", choices=("quad", "mc"), default="quad")
    s.add_argument("--reps", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_oc)

    s = sub.add_parser("estimate", help="MLEs and observed information for a stopped trial")
    s.add_argument("design")
    s.add_argument("--data", required=True, help="CSV rows: stage,n,mean")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("monitor", help="stage-by-stage decisions from cumulative Z statistics")
    s.add_argument("design")
    s.add_argument("--z", action="append", required=True)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_monitor)

    s = sub.add_parser("info", help="information measures over a theta grid")
    s.add_argument("design")
    s.add_argument("--theta-grid", action="append", required=True)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_info)

    s = sub.add_parser("asymcdf", help="limiting mixture CDF of the standardized MLE")
    s.add_argument("design")
    s.add_argument("--h", type=float, default=0.0)
    s.add_argument("--v-grid", action="append", required=True)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_asymcdf)

    s = sub.add_parser("convergence", help="sup-distance to the limiting CDF per scale factor")
    s.add_argument("design")
    s.add_argument("--h", type=float, default=0.0)
    s.add_argument("--scales", action="append", required=True)
    s.add_argument("--v-grid", action="append", required=True)
    s.add_argument("--increments", choices=("normal", "exponential"), default="normal")
    s.add_argument("--reps", type=int, default=20_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("estimators", help="Monte-Carlo bias/SD/MSE of both MLEs")
    s.add_argument("design")
    s.add_argument("--theta", action="append", required=True)
    s.add_argument("--reps", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int)
    s.add_argument("--hist", help="CSV path for histogram bins")
    s.add_argument("--bins", type=int, default=50)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_estimators)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleDesignError as exc:
        print(f"error: infeasible design: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except estimation.PathError as exc:
        print(f"error: inconsistent trial path: {exc}", file=sys.stderr)
        return EXIT_PATH
    except (InputError, SpecError, DesignError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
