"""Console script for storage_dr."""
import json
import logging
import sys

import click

from storage_dr.data.scenario import load_scenario_config
from storage_dr.exceptions import ConfigurationError, TheoremViolationError
from storage_dr.modeling.controllers import CONTROLLERS, ControllerConfig, make_controller, storage_size_table
from storage_dr.modeling.system import CostMode
from storage_dr.simulate import DEFAULT_V_LIST, lp_selftest, oracle_gap, run_simulation, sweep
from storage_dr.utils.monitors import check_trace_consistency, drift_check, monitor_invariants
from storage_dr.visualization.analysis import compare_runs, emit_outputs, emit_sweep_outputs, read_trace

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def _float_list(ctx, param, value):
    if value is None:
        return None
    try:
        return [float(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise click.BadParameter(f'expected comma-separated numbers, got {value!r}')


def _int_list(ctx, param, value):
    try:
        return [int(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise click.BadParameter(f'expected comma-separated integers, got {value!r}')


@click.group()
@click.option('--verbose', is_flag=True, help='Log debug messages.')
def main(verbose):
    """Drift-plus-penalty storage and demand-response control."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, force=True)


@main.command()
@click.option('--controller', type=click.Choice(CONTROLLERS), required=True)
@click.option('--scenario', 'scenario_path', required=True, help='Scenario JSON file or bundled name.')
@click.option('--slots', type=click.IntRange(min=1), default=10000, show_default=True)
@click.option('--seed', type=click.IntRange(min=0), default=0, show_default=True)
@click.option('--v', 'v', type=float, default=5., show_default=True)
@click.option('--e0', type=float, default=0., show_default=True, help='Initial stored energy in kWh.')
@click.option('--out', 'out_dir', default='.', show_default=True, type=click.Path(file_okay=False))
def simulate(controller, scenario_path, slots, seed, v, e0, out_dir):
    """Run one controller and write trace, energy series and metrics."""
    scenario = load_scenario_config(scenario_path)
    cfg = ControllerConfig.from_v(v, scenario.params)
    policy = make_controller(controller, cfg, scenario.params, scenario.disutility,
                             load_serving=scenario.load_serving)
    metrics, trace = run_simulation(policy, scenario, scenario.params, cfg, slots, seed, e0=e0)
    emit_outputs(trace, metrics, out_dir)
    click.echo(json.dumps(metrics.to_dict(), indent=2))
    return 0


@main.command('sweep')
@click.option('--scenario', 'scenario_path', required=True)
@click.option('--v-list', callback=_float_list, default=','.join(f'{v:g}' for v in DEFAULT_V_LIST),
              show_default=True)
@click.option('--controllers', default=None,
              help='Comma-separated controllers; default esm,greedy or dresm,greedy by scenario.')
@click.option('--seeds', callback=_int_list, default='0', show_default=True)
@click.option('--slots', type=click.IntRange(min=1), default=10000, show_default=True)
@click.option('--e0', type=float, default=0., show_default=True)
@click.option('--threads', type=click.IntRange(min=1), default=None,
              help='Worker processes; defaults to STORAGE_DR_THREADS or the CPU count.')
@click.option('--out', 'out_dir', default='.', show_default=True, type=click.Path(file_okay=False))
def sweep_command(scenario_path, v_list, controllers, seeds, slots, e0, threads, out_dir):
    """Run controllers over a list of V and seeds."""
    scenario = load_scenario_config(scenario_path)
    if controllers is None:
        names = ['esm' if scenario.load_serving else 'dresm', 'greedy']
    else:
        names = [name.strip() for name in controllers.split(',') if name.strip()]
        unknown = [name for name in names if name not in CONTROLLERS]
        if unknown:
            raise click.BadParameter(f'unknown controllers {", ".join(unknown)}', param_hint='--controllers')
    if not v_list:
        raise click.BadParameter('empty V list', param_hint='--v-list')

    runs = sweep(scenario, names, v_list, seeds, slots, e0=e0, threads=threads)
    emit_sweep_outputs(runs, out_dir)
    click.echo(storage_size_table(scenario.params, v_list).to_string(index=False))
    if 'greedy' in names and len(names) > 1:
        click.echo(compare_runs(runs).to_string(index=False))
    return 0


@main.command('oracle-gap')
@click.option('--scenario', 'scenario_path', required=True)
@click.option('--delta-e', type=float, default=0.5, show_default=True)
@click.option('--delta-a', type=float, default=0.5, show_default=True)
@click.option('--v', 'v', type=float, required=True)
@click.option('--slots', type=click.IntRange(min=1), default=100000, show_default=True)
@click.option('--seed', type=click.IntRange(min=0), default=0, show_default=True)
@click.option('--capacity', type=float, default=None,
              help='DP storage size; default is the controller capacity.')
def oracle_gap_command(scenario_path, delta_e, delta_a, v, slots, seed, capacity):
    """Compare the controller's average cost with the RVI gain."""
    scenario = load_scenario_config(scenario_path)
    report = oracle_gap(scenario, v, delta_e, delta_a=delta_a, T=slots, seed=seed, capacity=capacity)
    click.echo(json.dumps(report.to_dict(), indent=2))
    if not report.passed:
        raise TheoremViolationError(None, 'optimality_gap',
                                    f'average cost {report.average_cost:.6g} outside '
                                    f'[{report.lower:.6g}, {report.upper:.6g}]')
    return 0


@main.command()
@click.option('--trace', 'trace_path', required=True)
@click.option('--scenario', 'scenario_path', required=True)
@click.option('--v', 'v', type=float, required=True, help='V of the run that produced the trace.')
@click.option('--mode', type=click.Choice([m.value for m in CostMode]), default=None,
              help='Cost accounting of the trace; default follows the scenario.')
def verify(trace_path, scenario_path, v, mode):
    """Re-run the monitors and the drift check on a trace CSV."""
    scenario = load_scenario_config(scenario_path)
    cfg = ControllerConfig.from_v(v, scenario.params)
    trace = read_trace(trace_path)
    if not trace:
        raise ConfigurationError(f'trace {trace_path} has no records')
    if mode is None:
        mode = CostMode.LOAD_SERVING if scenario.load_serving else CostMode.DEMAND_RESPONSE
    report = monitor_invariants(trace, scenario.params, cfg)
    report += check_trace_consistency(trace, scenario.params, scenario.disutility, mode)
    drift, passed = drift_check(trace, cfg, scenario.params)
    for item in report:
        click.echo(f'slot {item.slot}: {item.constraint}: {item.detail}')
    click.echo(f'{len(trace)} slots, {len(report)} violations, drift check '
               f'{"passed" if passed else "failed"} (min margin {drift.min_margin:.6g})')
    if report:
        first = report[0]
        raise TheoremViolationError(first.slot, first.constraint, first.detail)
    if not passed:
        raise TheoremViolationError(trace[int(drift.failed_slots[0])].t, 'drift')
    return 0


@main.command('lp-selftest')
@click.option('--n', 'n', type=click.IntRange(min=1), default=1000, show_default=True)
@click.option('--seed', type=click.IntRange(min=0), default=0, show_default=True)
@click.option('--step', type=float, default=0.01, show_default=True)
def lp_selftest_command(n, seed, step):
    """Check the LP kernel against the grid oracle on random instances."""
    results = lp_selftest(n, seed, step=step)
    failed = results[~results['passed']]
    click.echo(f'{len(results) - len(failed)}/{len(results)} instances passed')
    if len(failed):
        click.echo(failed.to_string(index=False))
        raise TheoremViolationError(None, 'lp_selftest', f'{len(failed)} instances failed')
    return 0


def cli_main(argv=None):
    '''
    Runs the command group and maps outcomes to exit codes: 0 success,
    1 usage, 2 configuration or I/O error, 3 violated guarantee or check.
    '''
    try:
        result = main.main(args=argv, prog_name='storage_dr', standalone_mode=False)
    except click.exceptions.Exit as err:
        return err.exit_code
    except click.Abort:
        click.echo('Aborted!', err=True)
        return 1
    except click.ClickException as err:
        err.show()
        return 1
    except TheoremViolationError as err:
        click.echo(f'Violation: {err}', err=True)
        return 3
    except (ConfigurationError, OSError) as err:
        click.echo(f'Error: {err}', err=True)
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(cli_main())  # pragma: no cover
