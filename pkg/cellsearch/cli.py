"""
Command line front end.

Every command resolves a scenario document (preset, then config file, then flags), writes its tables into
the output directory and records a `manifest.json` that :code:`cellsearch rerun` replays.

Exit codes: 0 success, 1 configuration error, 2 runtime or numerical failure, 3 regression guard tripped,
64 usage error.
"""

import argparse
import datetime as dt
import enum
import logging
import math
import pathlib
import sys
import time
from typing import Any, Dict, List, NoReturn, Optional, Sequence, Tuple

import pydantic as pd

from . import __version__, analytic, distribution, errors, presets, simulate, utils
from .config import settings
from .document import ScenarioDocument
from .model import NetworkConfig, PathLossModel, Scenario, delay_from_cycles
from .numerics import SeriesResult

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_REGRESSION = 3
EXIT_USAGE = 64

MANIFEST_NAME = 'manifest.json'
Z_GUARD = 4.0


class UsageError(Exception):
    pass


class RunManifest(pd.BaseModel):
    """
    Provenance of one command run.

    :param command: command name
    :param argv: command line arguments
    :param config: resolved scenario document
    :param seed: master seed
    :param version: package version
    :param started: start time, UTC
    :param wall_clock_seconds: run duration
    :param outputs: written table names relative to the output directory
    """

    command: str
    argv: List[str]
    config: str
    seed: int
    version: str
    started: dt.datetime
    wall_clock_seconds: float = 0.0
    outputs: List[str] = []


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    try:
        return utils.parse_int_list(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _float_list(text: str) -> List[float]:
    try:
        return utils.parse_float_list(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('--preset', choices=presets.preset_names(), help="named scenario preset")
    common.add_argument('--config', type=pathlib.Path, help="scenario XML document")
    common.add_argument('--m', dest='beams', type=_int_list, help="beam counts: 1,4,8 or 1:12")
    common.add_argument('--lambda', dest='lambda_bs', type=float, help="BS intensity per square meter")
    common.add_argument('--scenario', choices=[s.value for s in Scenario])
    common.add_argument('--j-cap', type=int, help="series terms summed at most")
    common.add_argument('--tol', type=float, help="series term tolerance")
    common.add_argument('--seed', type=int, help="master seed")
    common.add_argument('--out', type=pathlib.Path, default=pathlib.Path('.'), help="output directory")

    parser = ArgumentParser(prog='cellsearch', description="Directional cell search delay toolkit")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--log-level', default=settings.log_level, help="logging level")
    commands = parser.add_subparsers(dest='command', metavar='command', parser_class=ArgumentParser)
    commands.required = True

    commands.add_parser('eval-mean', parents=[common], help="mean cycle count series, bounds and classifier")

    conditional = commands.add_parser('conditional', parents=[common], help="conditional mean given the nearest BS")
    conditional.add_argument('--r0', type=_float_list, help="nearest distances: 10,20 or 10:100:10")

    for name, description in (('simulate', "simulated conditional mean"), ('compare', "analytic against simulated")):
        command = commands.add_parser(name, parents=[common], help=description)
        command.add_argument('--r0', type=_float_list, help="nearest distances: 10,20 or 10:100:10")
        command.add_argument('--trials', type=int, help="trials per point")
        command.add_argument('--max-cycles', type=int, help="trial censoring cap")
        command.add_argument('--workers', type=int, help="worker processes")

    for name, description in (('ccdf', "conditional mean delay CCDF"), ('quantiles', "delay quantiles")):
        command = commands.add_parser(name, parents=[common], help=description)
        command.add_argument('--samples', type=int, help="nearest distance draws")
        command.add_argument('--percentiles', type=_float_list, help="percentiles: 95,50,10")

    phase = commands.add_parser('phase-diagram', parents=[common], help="finite/infinite mean verdict grid")
    phase.add_argument('--lambda-range', type=_float_list, required=True, help="start:stop:count[:log]")
    phase.add_argument('--m-range', type=_int_list, required=True, help="start:stop[:step] or list")

    commands.add_parser('export-config', parents=[common], help="write the resolved scenario document")

    rerun = commands.add_parser('rerun', help="replay a manifest")
    rerun.add_argument('manifest', type=pathlib.Path)
    rerun.add_argument('--out', type=pathlib.Path, help="output directory, the recorded one if missing")

    return parser


def resolve_document(args: argparse.Namespace) -> ScenarioDocument:
    """
    Applies the preset, the config document and the flags in order of increasing precedence.
    """

    if args.preset is None and args.config is None:
        raise UsageError("either --preset or --config is required")

    document = presets.load_preset(args.preset) if args.preset is not None else None

    if args.config is not None:
        try:
            loaded = ScenarioDocument.from_xml(args.config.read_bytes())
        except OSError as e:
            raise errors.ConfigError(f"can't read config {args.config}: {e}") from e

        if document is None:
            document = loaded
        else:
            document = document.copy(update={name: getattr(loaded, name) for name in loaded.__fields_set__})

    assert document is not None

    updates: Dict[str, Dict[str, Any]] = {
        'network': {'lambda_bs': args.lambda_bs, 'scenario': args.scenario},
        'truncation': {'j_cap': args.j_cap, 'abs_tolerance': args.tol},
        'simulation': {
            'master_seed': args.seed,
            'trials': getattr(args, 'trials', None),
            'max_cycles': getattr(args, 'max_cycles', None),
            'samples': getattr(args, 'samples', None),
        },
        'sweep': {
            'beams': args.beams,
            'r0': getattr(args, 'r0', None),
            'percentiles': getattr(args, 'percentiles', None),
        },
    }
    for section, values in updates.items():
        if given := {name: value for name, value in values.items() if value is not None}:
            document = document.updated(section, **given)

    if not document.sweep.beams:
        raise UsageError("the beam list is empty")

    return document


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, enum.Enum):
        return value.value
    return str(value)


class Run:
    """
    Output directory bookkeeping of one command.
    """

    def __init__(self, command: str, argv: Sequence[str], document: ScenarioDocument, out: pathlib.Path):
        self.out = out
        self.document = document
        self.manifest = RunManifest(
            command=command,
            argv=list(argv),
            config=document.to_xml(pretty=True).decode(),
            seed=document.simulation.master_seed,
            version=__version__,
            started=dt.datetime.now(dt.timezone.utc),
        )
        self._clock = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> pathlib.Path:
        path = self.out / name
        with open(path, 'w') as stream:
            stream.write(f"# manifest: {MANIFEST_NAME}\n")
            stream.write('\t'.join(header) + '\n')
            for row in rows:
                stream.write('\t'.join(_fmt(value) for value in row) + '\n')

        self.record(name)
        return path

    def record(self, name: str) -> None:
        self.manifest.outputs.append(name)

    def finish(self) -> None:
        self.manifest.wall_clock_seconds = time.perf_counter() - self._clock
        (self.out / MANIFEST_NAME).write_text(self.manifest.json(indent=2))
        for name in self.manifest.outputs:
            print(self.out / name)


def _status(result: SeriesResult) -> str:
    return repr(result.value) if result.is_converged else f"{result.status.value}:{result.value!r}"


def _sweep(document: ScenarioDocument) -> Tuple[NetworkConfig, PathLossModel, List[NetworkConfig]]:
    cfg, plm = document.resolve()
    return cfg, plm, [cfg.with_beams(m) for m in document.sweep.beams]


def cmd_eval_mean(run: Run) -> int:
    document = run.document
    _, plm, configs = _sweep(document)
    truncation, spec = document.truncation.to_truncation(), document.quadrature.to_spec()

    rows = []
    for cfg in configs:
        result = analytic.mean_cycles(cfg, plm, truncation, spec)

        try:
            lower: Any = analytic.lower_bound_mean_cycles(cfg, plm, truncation, spec)
        except errors.DegenerateConfigError:
            lower = math.inf

        try:
            upper: Any = analytic.upper_bound_mean_cycles_interference(cfg, plm)
        except errors.DivergentIntegralError:
            upper = math.inf
        except errors.UnsupportedScenarioError:
            upper = 'n/a'

        try:
            verdict: Any = analytic.phase_classifier(cfg, plm)
        except errors.UnsupportedScenarioError:
            verdict = 'n/a'

        delay = delay_from_cycles(cfg, result.value).delay_seconds
        rows.append((
            cfg.m_beams, _status(result), result.terms_used, result.tail_exponent_estimate,
            lower, upper, verdict, delay,
        ))

    run.table('eval_mean.tsv', (
        'm', 'mean_cycles_or_status', 'terms', 'tail_exponent', 'lower_bound', 'upper_bound', 'verdict',
        'delay_seconds',
    ), rows)
    return EXIT_OK


def _analytic_conditional(run: Run, cap: Optional[int] = None) -> Dict[Tuple[float, int], SeriesResult]:
    document = run.document
    _, plm, configs = _sweep(document)
    truncation, spec = document.truncation.to_truncation(), document.quadrature.to_spec()
    if cap is not None:
        truncation = truncation.copy(update={'j_cap': cap})

    return {
        (r0, cfg.m_beams): analytic.cond_mean_cycles_given_r0(r0, cfg, plm, truncation, spec)
        for cfg in configs for r0 in document.sweep.r0
    }


def cmd_conditional(run: Run) -> int:
    results = _analytic_conditional(run)
    rows = [
        (r0, m, _status(result), result.terms_used)
        for (r0, m), result in sorted(results.items(), key=lambda item: (item[0][1], item[0][0]))
    ]
    run.table('conditional.tsv', ('r0_m', 'm', 'mean_cycles_or_status', 'terms'), rows)
    return EXIT_OK


def _trial_config(document: ScenarioDocument, r0: float) -> simulate.TrialConfig:
    section = document.simulation
    return simulate.TrialConfig(
        trials=section.trials,
        max_cycles=section.max_cycles,
        window_radius=section.window_radius,
        master_seed=section.master_seed,
        nearest_at=r0,
    )


def _simulated(run: Run, workers: Optional[int]) -> Dict[Tuple[float, int], simulate.MeanEstimate]:
    document = run.document
    _, plm, configs = _sweep(document)

    estimates = {}
    for cfg in configs:
        for r0 in document.sweep.r0:
            trial = _trial_config(document, r0)
            estimates[(r0, cfg.m_beams)] = simulate.estimate_mean_cycles(None, cfg, plm, trial, workers)

    return estimates


def cmd_simulate(run: Run, workers: Optional[int]) -> int:
    estimates = _simulated(run, workers)
    rows = [
        (r0, m, e.mean, e.stderr, e.censored_fraction, e.trials)
        for (r0, m), e in sorted(estimates.items(), key=lambda item: (item[0][1], item[0][0]))
    ]
    run.table('simulate.tsv', ('r0_m', 'm', 'mean_cycles', 'stderr', 'censored_fraction', 'trials'), rows)
    return EXIT_OK


def cmd_compare(run: Run, workers: Optional[int]) -> int:
    document = run.document
    cfg, _ = document.resolve()
    cap = simulate.TrialConfig(max_cycles=document.simulation.max_cycles).cap_for(cfg.scenario)

    analytic_values = _analytic_conditional(run, cap)
    estimates = _simulated(run, workers)

    rows, tripped = [], []
    for key in sorted(estimates, key=lambda item: (item[1], item[0])):
        result, estimate = analytic_values[key], estimates[key]
        z = estimate.z_score(result.value)
        if abs(z) > Z_GUARD:
            tripped.append(key)
        rows.append((
            key[0], key[1], result.value, result.status.value, estimate.mean, estimate.stderr,
            estimate.censored_fraction, z, (estimate.mean - result.value) / result.value,
        ))

    run.table('compare.tsv', (
        'r0_m', 'm', 'analytic', 'analytic_status', 'simulated', 'stderr', 'censored_fraction', 'z', 'rel_gap',
    ), rows)

    if tripped:
        logger.error("|z| > %s at (r0, M) = %s", Z_GUARD, tripped)
        return EXIT_REGRESSION
    return EXIT_OK


def _distributions(run: Run) -> Dict[int, distribution.DelayDistribution]:
    document = run.document
    _, plm, configs = _sweep(document)
    truncation, spec = document.truncation.to_truncation(), document.quadrature.to_spec()

    return {
        cfg.m_beams: distribution.build_delay_distribution(
            cfg, plm, document.simulation.samples, truncation,
            rng=utils.stream_rng(document.simulation.master_seed, cfg.m_beams),
            spec=spec,
            percentiles=document.sweep.percentiles or distribution.DEFAULT_PERCENTILES,
        )
        for cfg in configs
    }


def cmd_ccdf(run: Run) -> int:
    rows = []
    for m, dist in _distributions(run).items():
        name = f"ccdf_m{m}.tsv"
        distribution.write_ccdf(run.out / name, dist, MANIFEST_NAME)
        run.record(name)

        fit = dist.tail_fit
        if fit is None:
            rows.append((m, 'unavailable', '', '', '', '', dist.censored_count / dist.size))
        else:
            rows.append((
                m, fit.slope, fit.ci[0], fit.ci[1], fit.r_squared, fit.curved, dist.censored_count / dist.size,
            ))

    run.table('tail_fit.tsv', ('m', 'slope', 'ci_low', 'ci_high', 'r_squared', 'curved', 'censored_fraction'), rows)
    return EXIT_OK


def cmd_quantiles(run: Run) -> int:
    percentiles = run.document.sweep.percentiles or distribution.DEFAULT_PERCENTILES

    rows = []
    for m, dist in _distributions(run).items():
        rows.extend((m, percentile, delay) for percentile, delay in distribution.quantile_rows(dist, percentiles))

    run.table('quantiles.tsv', ('m', 'percentile', 'delay_seconds_or_censored'), rows)
    return EXIT_OK


def cmd_phase_diagram(run: Run, lambdas: Sequence[float], beams: Sequence[int]) -> int:
    if not lambdas or not beams:
        raise UsageError("empty parameter range")

    cfg, plm = run.document.resolve()

    rows = []
    for lambda_bs in lambdas:
        for m in beams:
            point = cfg.with_density(lambda_bs).with_beams(m)
            rows.append((lambda_bs, m, analytic.phase_classifier(point, plm)))
    run.table('phase_diagram.tsv', ('lambda', 'm', 'verdict'), rows)

    if cfg.scenario is Scenario.NOISE_LIMITED and plm.alpha_nlos == 2:
        critical = analytic.critical_density_product(cfg, plm)
        run.table('phase_boundary.tsv', ('m', 'lambda_critical'), [(m, critical / m) for m in beams])

    return EXIT_OK


def cmd_export_config(run: Run) -> int:
    (run.out / 'config.xml').write_bytes(run.document.to_xml(pretty=True))
    run.record('config.xml')
    return EXIT_OK


def execute(args: argparse.Namespace, argv: Sequence[str], document: Optional[ScenarioDocument] = None) -> int:
    document = document or resolve_document(args)
    run = Run(args.command, argv, document, args.out)
    workers = getattr(args, 'workers', None)

    if args.command == 'eval-mean':
        code = cmd_eval_mean(run)
    elif args.command == 'conditional':
        code = cmd_conditional(run)
    elif args.command == 'simulate':
        code = cmd_simulate(run, workers)
    elif args.command == 'compare':
        code = cmd_compare(run, workers)
    elif args.command == 'ccdf':
        code = cmd_ccdf(run)
    elif args.command == 'quantiles':
        code = cmd_quantiles(run)
    elif args.command == 'phase-diagram':
        code = cmd_phase_diagram(run, args.lambda_range, args.m_range)
    elif args.command == 'export-config':
        code = cmd_export_config(run)
    else:
        raise AssertionError("unreachable")

    run.finish()
    return code


def rerun(parser: ArgumentParser, manifest_path: pathlib.Path, out: Optional[pathlib.Path]) -> int:
    try:
        manifest = RunManifest.parse_file(manifest_path)
    except (OSError, pd.ValidationError) as e:
        raise errors.ConfigError(f"invalid manifest {manifest_path}: {e}") from e

    argv = manifest.argv + (['--out', str(out)] if out is not None else [])
    args = parser.parse_args(argv)
    if args.out == pathlib.Path('.') and out is None:
        args.out = manifest_path.parent

    return execute(args, manifest.argv, ScenarioDocument.from_xml(manifest.config.encode()))


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=args.log_level.upper(),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    try:
        if args.command == 'rerun':
            return rerun(parser, args.manifest, args.out)
        return execute(args, argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except errors.ConfigError as e:
        logger.error("configuration error: %s", e)
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except errors.BaseError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
