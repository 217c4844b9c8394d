"""
Command-line front end.

    python -m app --config scenario.ini [--out result.csv] [--step 1e-3]
                  [--precision 17] [--branch plus|minus|both] [--seed 0] [-v]

Several --config flags run as a sweep in a thread pool; --out is then a
directory and each scenario writes <config stem>.csv into it (repeated stems
get _2, _3, ...). Results are written in config order after the whole sweep
finishes. The exit status is the largest of the per-scenario statuses.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from app.core.errors import (
    EXIT_OK,
    EXIT_VERIFICATION,
    ConfigError,
    ErmakovError,
    VerificationFailed,
    exit_code_for,
)
from app.core.expr import ONE, eval_grid
from app.core.liealg import infer_variables, parse_field, verify_preset, verify_structure
from app.core.reduce import (
    ErmakovForm,
    GaugeTransform,
    quasi_lie_transform,
    reducibility_check,
    remove_damping,
    reparametrize,
    velocity_killing_alpha,
)
from app.core.scenario import Scenario
from app.core.settings import get_default_step, get_log_level, get_precision
from app.core.superpose import LinearOscillator, SuperpositionConstants, general_solution
from app.file_parsers import load_scenario_file
from app.utils import csv_lines, pretty_json, slugify_filename

logger = logging.getLogger(__name__)

BRANCHES = ("plus", "minus", "both")


@dataclass
class RunOptions:
    out: Optional[str] = None
    step: Optional[float] = None
    precision: Optional[int] = None
    branch: Optional[str] = None
    seed: int = 0


@dataclass
class RunResult:
    status: int = EXIT_OK
    csv: List[str] = field(default_factory=list)
    report: List[str] = field(default_factory=list)
    error: str = ""


class _Context:
    def __init__(self, scenario: Scenario, options: RunOptions):
        self.scenario = scenario
        self.options = options
        self.action = scenario.action
        self.t0 = scenario.time.t0
        self.t1 = scenario.time.t1
        if options.step is not None:
            self.step = options.step
        elif scenario.time.step is not None:
            self.step = scenario.time.step
        else:
            self.step = get_default_step()
        if options.precision is not None:
            self.precision = options.precision
        elif scenario.output.precision is not None:
            self.precision = scenario.output.precision
        else:
            self.precision = get_precision()

    def system(self):
        return self.scenario.system.build()

    def grid(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.action.points)

    def csv(self, header, columns) -> List[str]:
        return csv_lines(header, columns, self.precision)


# ----------------------------
# Actions
# ----------------------------
def _integrate(ctx: _Context, result: RunResult) -> None:
    act = ctx.action
    traj = ctx.system().integrate(ctx.t0, ctx.t1, ctx.step, act.x0, act.v0)
    result.csv = ctx.csv(["t", "x", "v"], [traj.times(), traj.component(0), traj.component(1)])


def _reduce(ctx: _Context, result: RunResult) -> None:
    act = ctx.action
    sys_ = ctx.system()

    if act.method == "damping":
        red = remove_damping(sys_, act.zeta0, ctx.t0, ctx.t1, ctx.step)
        y0, vy0 = red.initial_state(act.x0, act.v0, ctx.t0)
        y = red.system.integrate(ctx.t0, ctx.t1, ctx.step, y0, vy0)
        x = red.pull_back(y)
        ts = y.times()
        result.report.append(f"Omega^2 = {red.omega_squared}")
        result.report.append(f"zeta = {red.zeta}")
        result.csv = ctx.csv(
            ["t", "x", "v", "y", "v_y", "zeta"],
            [ts, x.component(0), x.component(1), y.component(0), y.component(1), [red.zeta.eval(t) for t in ts]],
        )
        return

    if act.method == "gauge":
        g = GaugeTransform.from_text(act.alpha, act.beta or 0.0)
        ts = ctx.grid()
        g.check(ts)
        tc = quasi_lie_transform(sys_, g)
        result.report.extend(f"{k}' = {v}" for k, v in tc.describe().items())
        result.csv = ctx.csv(
            ["t", "a", "b", "c", "d", "e"],
            [ts] + [eval_grid(getattr(tc, n), ts) for n in ("a", "b", "c", "d", "e")],
        )
        return

    report = reducibility_check(sys_, ctx.t0, ctx.t1, points=act.points, seed=ctx.options.seed)
    result.report.extend(pretty_json(report.as_dict()).splitlines())
    if not report.passed:
        raise VerificationFailed(
            f"reducibility condition fails: residual {report.max_residual:.3e} at t={report.location!r}",
            report.as_dict(),
        )
    form = ErmakovForm.from_report(sys_, report)
    ts = ctx.grid()
    coupling = eval_grid(sys_.c / form.f / form.f, ts)
    result.csv = ctx.csv(
        ["t", "alpha", "omega_squared", "coupling"],
        [ts, eval_grid(form.f, ts), eval_grid(form.omega_squared, ts), coupling],
    )


def _reparametrize(ctx: _Context, result: RunResult) -> None:
    act = ctx.action
    sys_ = ctx.system()
    if act.alpha.strip().lower() == "velocity_killing":
        alpha = velocity_killing_alpha(sys_.a, 1.0, ctx.t0, ctx.t1, ctx.step)
    else:
        alpha = act.alpha
    rep = reparametrize(sys_, alpha, ctx.t0, ctx.t1, ctx.step)
    if rep.velocity_coefficient is not None:
        result.report.append(f"x' coefficient = {rep.velocity_coefficient}")
    xs = rep.integrate(act.x0, act.v0, ctx.step)
    ss, x, v = rep.in_s_time(xs)
    ts = [rep.time_of(s) for s in ss]
    result.csv = ctx.csv(["s", "t", "x", "v"], [ss, ts, x, v])


def _signs(ctx: _Context, default: int) -> List[int]:
    branch = ctx.options.branch
    if branch == "both":
        return [1, -1]
    if branch == "minus":
        return [-1]
    if branch == "plus":
        return [1]
    return [default]


def _superpose(ctx: _Context, result: RunResult) -> None:
    act = ctx.action
    spec = ctx.scenario.system
    sys_ = spec.build()

    if spec.name == "milne_pinney":
        osc = LinearOscillator(ONE, -sys_.b)
        k = act.k if act.k is not None else spec.k_value()
        if k is None:
            raise ConfigError("superpose needs a constant k")
    else:
        report = reducibility_check(sys_, ctx.t0, ctx.t1, points=act.points, seed=ctx.options.seed)
        if not report.passed:
            raise VerificationFailed("system is not reducible to Ermakov form", report.as_dict())
        form = ErmakovForm.from_report(sys_, report)
        osc = LinearOscillator.from_form(form)
        k = form.k
        result.report.append(f"alpha = {form.f}")

    def solve(consts):
        return general_solution(osc, k, consts, ctx.t0, ctx.t1, ctx.step)

    if act.I1 is not None and act.I2 is not None:
        consts = SuperpositionConstants(act.I1, act.I2, 1.0, act.sign)
        solutions = [solve(consts.with_sign(s)) for s in _signs(ctx, act.sign)]
    else:
        fitted = general_solution(osc, k, None, ctx.t0, ctx.t1, ctx.step, initial=(act.x0, act.v0))
        solutions = [
            fitted if s == fitted.constants.sign else solve(fitted.constants.with_sign(s))
            for s in _signs(ctx, fitted.constants.sign)
        ]
    first = solutions[0]

    ts = first.trajectory.times()
    header = ["t"]
    columns = [ts]
    if len(solutions) == 1:
        header += ["x", "v"]
        columns += [solutions[0].trajectory.component(0), solutions[0].trajectory.component(1)]
    else:
        for sol in solutions:
            tag = "plus" if sol.constants.sign > 0 else "minus"
            header += [f"x_{tag}", f"v_{tag}"]
            columns += [sol.trajectory.component(0), sol.trajectory.component(1)]
    if ctx.scenario.output.diagnostics:
        header += ["I1", "I2", "W"]
        columns += [solutions[0].I1, solutions[0].I2, solutions[0].W]
    result.report.append(pretty_json(first.constants.as_dict()))
    result.csv = ctx.csv(header, columns)


def _verify(ctx: _Context, result: RunResult) -> None:
    report = verify_preset(ctx.action.algebra)
    result.report.extend(report.lines())
    if not report.passed:
        raise VerificationFailed(f"algebra '{ctx.action.algebra}' fails", report.as_dict())


def _algebra_check(ctx: _Context, result: RunResult) -> None:
    act = ctx.action
    symbols = tuple(s.strip() for s in act.symbols.split(",") if s.strip())
    variables = infer_variables(ctx.scenario.fields.values(), symbols)
    fields = {name: parse_field(text, variables, symbols) for name, text in ctx.scenario.fields.items()}
    report = verify_structure(
        act.relation_list(),
        fields,
        subalgebra=act.name_list(act.subalgebra),
        space=act.name_list(act.space),
        escaping=act.escape_pairs(),
    )
    result.report.extend(report.lines())
    if not report.passed:
        raise VerificationFailed("algebra check fails", report.as_dict())


_ACTIONS = {
    "integrate": _integrate,
    "reduce": _reduce,
    "reparametrize": _reparametrize,
    "superpose": _superpose,
    "verify": _verify,
    "algebra-check": _algebra_check,
}


def run(scenario: Scenario, options: Optional[RunOptions] = None) -> RunResult:
    options = options or RunOptions()
    result = RunResult()
    try:
        ctx = _Context(scenario, options)
        logger.info("running %s (%s)", scenario.action.name, scenario.source or "<inline>")
        _ACTIONS[scenario.action.name](ctx, result)
    except VerificationFailed as exc:
        result.status = EXIT_VERIFICATION
        result.error = str(exc)
    except (ErmakovError, ArithmeticError, ValueError, TypeError) as exc:
        result.status = exit_code_for(exc)
        result.error = str(exc)
        result.csv = []
    return result


# ----------------------------
# Output
# ----------------------------
def _write_text(path: Path, lines: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit(result: RunResult, out_path: Optional[Path], stdout=None, stderr=None) -> None:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if result.csv:
        if out_path is not None:
            _write_text(out_path, result.csv)
            for line in result.report:
                print(line, file=stdout)
        else:
            for line in result.csv:
                print(line, file=stdout)
            for line in result.report:
                print(line, file=stderr)
    elif result.report:
        if out_path is not None:
            _write_text(out_path, result.report)
        else:
            for line in result.report:
                print(line, file=stdout)
    if result.error:
        print(f"error: {result.error}", file=stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="python -m app",
        description="Reduce, verify and superpose Milne-Pinney / Ermakov systems.",
    )
    p.add_argument("--config", action="append", required=True, help="scenario file (repeat for a sweep)")
    p.add_argument("--out", default=None, help="output file (directory for a sweep)")
    p.add_argument("--step", type=float, default=None, help="integration step")
    p.add_argument("--precision", type=int, default=None, help="CSV significant digits (1-17)")
    p.add_argument("--branch", choices=BRANCHES, default=None, help="superposition branch")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    p.add_argument("--jobs", type=int, default=4, help="worker threads for a sweep")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def _execute(config: str, options: RunOptions, out_path: Optional[Path]) -> Tuple[RunResult, Optional[Path]]:
    try:
        scenario = load_scenario_file(config)
    except ErmakovError as exc:
        return RunResult(status=exit_code_for(exc), error=str(exc)), None
    if out_path is None and scenario.output.path:
        out_path = Path(scenario.output.path)
    return run(scenario, options), out_path


def _run_one(config: str, options: RunOptions, out_path: Optional[Path]) -> int:
    result, target = _execute(config, options, out_path)
    emit(result, target)
    return result.status


def sweep_targets(configs: Sequence[str], out_dir: Path) -> List[Path]:
    """One file per config in out_dir; repeated stems get _2, _3, ... in config order."""
    used = set()
    targets = []
    for config in configs:
        stem = slugify_filename(Path(config).stem)
        name, n = stem, 1
        while name in used:
            n += 1
            name = f"{stem}_{n}"
        used.add(name)
        targets.append(out_dir / f"{name}.csv")
    return targets


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        level = "DEBUG" if args.verbose else get_log_level()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    if args.step is not None and not args.step > 0.0:
        print("error: --step must be positive", file=sys.stderr)
        return exit_code_for(ConfigError("step"))
    if args.precision is not None and not 1 <= args.precision <= 17:
        print("error: --precision must lie in [1, 17]", file=sys.stderr)
        return exit_code_for(ConfigError("precision"))

    options = RunOptions(args.out, args.step, args.precision, args.branch, args.seed)
    configs = list(args.config)
    if len(configs) == 1:
        return _run_one(configs[0], options, Path(args.out) if args.out else None)

    targets: List[Optional[Path]] = [None] * len(configs)
    if args.out:
        targets = list(sweep_targets(configs, Path(args.out)))

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        outcomes = list(pool.map(_execute, configs, [options] * len(configs), targets))
    # emitted in config order once every worker is done
    for result, target in outcomes:
        emit(result, target)
    statuses = [result.status for result, _ in outcomes]
    logger.info("sweep finished: %s", statuses)
    return max(statuses)


if __name__ == "__main__":
    raise SystemExit(main())
