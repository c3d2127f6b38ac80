#!/usr/bin/env python3
"""
mdisp CLI Interface
Command-line interface for m-dissipative boundary condition checks.
"""

import json
import logging
import os
import sys

import click

# Add the current directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import ConfigError, get_config
from impedance import ImpedanceError
from linrel import RelationError
from maxwell1d import Maxwell1DError
from models import SUITES, InvariantViolation, RunConfig
from morder import MOrderError
from runner import Runner
from storage import write_frame, write_report
from tracespace import SurfaceError

EXIT_INVARIANT = 2
EXIT_CONFIG = 3

GROUP_KEYS = ('seed', 'output', 'tolerances', 'profile')


def parse_int_list(ctx, param, value):
    """Accept '4,6,8' on the command line or [4, 6, 8] from a config file"""
    if value is None or value == '':
        return None
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    try:
        return [int(v) for v in str(value).split(',') if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got '{value}'")


def _load_run_file(path):
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError('config', f"cannot read {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError('config', 'run configuration must be a JSON object')
    return data


def execute(ctx, command, options, table=None):
    """Run one command, emit its output and exit with the status contract"""
    state = ctx.obj
    options = {k: v for k, v in options.items() if v is not None}
    try:
        run_config = RunConfig(command, options, state['seed'], state['output'], state['tolerances'])
        report = Runner(run_config, state['settings']).run()
    except ConfigError as e:
        click.echo(f"✗ Configuration error: {e}", err=True)
        ctx.exit(EXIT_CONFIG)
    except (RelationError, MOrderError, SurfaceError, ImpedanceError, Maxwell1DError) as e:
        click.echo(f"✗ {type(e).__name__}: {e}", err=True)
        ctx.exit(EXIT_INVARIANT)

    output = state['output']
    if table is not None:
        text = write_frame(report.tables[table], output)
    else:
        text = write_report(report, output)
    if output is None:
        click.echo(text, nl=False)
    else:
        click.echo(f"  Written: {output}", err=True)

    # the report is written before the status is decided
    try:
        report.raise_for_failures()
    except InvariantViolation as e:
        click.echo(f"✗ Invariant violated: {e}", err=True)
        click.echo(f"✗ {command}: failed checks {', '.join(report.failures)}", err=True)
        ctx.exit(EXIT_INVARIANT)
    click.echo(f"✓ {command}: {len(report.checks)} checks passed", err=True)


@click.group()
@click.option('--config', 'config_file', type=click.Path(exists=True), help='Run configuration JSON mirroring the flags')
@click.option('--profile', default=None, help='Settings profile (default, quick, acceptance, testing)')
@click.option('--seed', type=int, default=None, help='Random seed recorded in every report')
@click.option('--output', '-o', type=click.Path(), default=None, help='Write the report here instead of stdout')
@click.pass_context
def cli(ctx, config_file, profile, seed, output):
    """mdisp CLI - classify and verify m-dissipative boundary conditions"""
    try:
        data = _load_run_file(config_file) if config_file else {}
        settings = get_config(profile or data.get('profile'))
    except ConfigError as e:
        click.echo(f"✗ Configuration error: {e}", err=True)
        ctx.exit(EXIT_CONFIG)

    logging.basicConfig(stream=sys.stderr, level=getattr(logging, str(settings.LOG_LEVEL).upper(), logging.WARNING),
                        format='%(levelname)s %(name)s: %(message)s')
    ctx.default_map = {k: v for k, v in data.items() if k not in GROUP_KEYS}
    ctx.obj = {
        'settings': settings,
        'seed': seed if seed is not None else data.get('seed', settings.DEFAULT_SEED),
        'output': output or data.get('output'),
        'tolerances': data.get('tolerances', {}),
    }


@cli.group()
def relation():
    """Linear relations in H (+) H"""
    pass


@relation.command('check')
@click.option('--file', '-f', type=click.Path(exists=True), required=True, help='Relation JSON file')
@click.option('--samples', type=int, default=0, help='Random cone samples for the empirical margin')
@click.option('--adjoint', type=click.Path(), default=None, help='Write the adjoint relation to this file')
@click.option('--cayley', type=click.Path(), default=None, help='Write the Cayley contraction to this file')
@click.pass_context
def relation_check(ctx, file, samples, adjoint, cayley):
    """Classify a relation (dissipative, maximal, selfadjoint, ...)"""
    execute(ctx, 'relation.check', {'file': file, 'samples': samples, 'adjoint': adjoint, 'cayley': cayley})


@cli.group()
def surface():
    """Spectral model surfaces and trace spaces"""
    pass


@surface.command('info')
@click.option('--model', default='sphere', help='sphere, flat_torus, two_spheres or two_tori')
@click.option('--lmax', type=int, default=None, help='Spherical harmonic degree cut-off')
@click.option('--kmax', type=int, default=None, help='Torus wave number cut-off')
@click.option('--quad-factor', type=int, default=None, help='Quadrature oversampling factor')
@click.option('--export', type=click.Path(), default=None, help='Write the basis table as [re, im] JSON')
@click.pass_context
def surface_info(ctx, model, lmax, kmax, quad_factor, export):
    """Hodge basis summary with Gram and biorthogonality residuals"""
    execute(ctx, 'surface.info', {'surface': model, 'lmax': lmax, 'kmax': kmax,
                                  'quad_factor': quad_factor, 'export': export})


@cli.group()
def impedance():
    """Impedance boundary operators and their conditions"""
    pass


@impedance.command('classify')
@click.option('--surface', default='sphere', help='Model surface')
@click.option('--lmax', type=int, default=None)
@click.option('--kmax', type=int, default=None)
@click.option('--quad-factor', type=int, default=None)
@click.option('--z', default='const:1.0', help='const:a | f-dev:expr | cap:theta0=t | sector:phi=p,r=r | random:s=s,seed=k')
@click.option('--convergence', callback=parse_int_list, default=None, help='Truncations for a convergence table')
@click.option('--matrices', is_flag=True, help='Include T and K in the report')
@click.pass_context
def impedance_classify(ctx, surface, lmax, kmax, quad_factor, z, convergence, matrices):
    """Accretivity, Cayley contraction and condition verdicts for one impedance"""
    execute(ctx, 'impedance.classify', {'surface': surface, 'lmax': lmax, 'kmax': kmax,
                                        'quad_factor': quad_factor, 'z': z, 'convergence': convergence,
                                        'matrices': matrices or None})


@impedance.command('extend')
@click.option('--method', type=click.Choice(['friedrichs', 'krein']), default='friedrichs')
@click.option('--surface', default='sphere')
@click.option('--lmax', type=int, default=None)
@click.option('--kmax', type=int, default=None)
@click.option('--quad-factor', type=int, default=None)
@click.option('--z', default='cap:theta0=0.5', help='Nonnegative impedance')
@click.option('--trend', callback=parse_int_list, default=None, help='Truncations for the F-K gap trend table')
@click.pass_context
def impedance_extend(ctx, method, surface, lmax, kmax, quad_factor, z, trend):
    """Friedrichs or Krein condition of the restricted boundary operator"""
    execute(ctx, 'impedance.extend', {'method': method, 'surface': surface, 'lmax': lmax, 'kmax': kmax,
                                      'quad_factor': quad_factor, 'z': z, 'trend': trend})


@cli.group()
def maxwell1d():
    """1-D Maxwell testbed"""
    pass


def boundary_options(fn):
    for option in reversed([
        click.option('--z0', default=None, help='Impedance at x=0 (complex allowed)'),
        click.option('--z1', default=None, help='Impedance at x=1'),
        click.option('--K', 'k', type=click.Path(exists=True), default=None, help='2x2 contraction JSON'),
        click.option('--n', type=int, default=400, help='Grid points'),
        click.option('--eps', default='1', help="Permittivity, e.g. '1' or '1,0.5:2'"),
        click.option('--mu', default='1', help='Permeability profile'),
    ]):
        fn = option(fn)
    return fn


def _boundary(z0, z1, k, n, eps, mu):
    return {'z0': z0, 'z1': z1, 'K': k, 'n': n, 'eps': eps, 'mu': mu}


@maxwell1d.command('evolve')
@boundary_options
@click.option('--dt', type=float, default=1e-3)
@click.option('--steps', type=int, default=2000)
@click.option('--pulse', default='gaussian:x0=0.5,w=0.05', help='gaussian:x0=..,w=..[,dir=right|left|both]')
@click.pass_context
def maxwell_evolve(ctx, z0, z1, k, n, eps, mu, dt, steps, pulse):
    """Crank-Nicolson energy trace as CSV (step,t,energy,boundary_flux)"""
    options = _boundary(z0, z1, k, n, eps, mu)
    options.update({'dt': dt, 'steps': steps, 'pulse': pulse})
    execute(ctx, 'maxwell1d.evolve', options, table='trace')


@maxwell1d.command('range')
@boundary_options
@click.option('--samples', type=int, default=200, help='Upper half-plane resolvent samples')
@click.pass_context
def maxwell_range(ctx, z0, z1, k, n, eps, mu, samples):
    """Numerical range and resolvent bound of the discrete generator"""
    options = _boundary(z0, z1, k, n, eps, mu)
    options['samples'] = samples
    execute(ctx, 'maxwell1d.range', options)


@maxwell1d.command('green')
@click.option('--case', default='trig1', help="trig1, trig2, interior, leontovich or 'all'")
@click.option('--n', type=int, default=64, help='Grid for the discrete identity')
@click.option('--eps', default='1')
@click.option('--mu', default='1')
@click.pass_context
def maxwell_green(ctx, case, n, eps, mu):
    """Continuum and discrete Green identity residuals"""
    execute(ctx, 'maxwell1d.green', {'case': case, 'n': n, 'eps': eps, 'mu': mu})


@maxwell1d.command('spectrum')
@boundary_options
@click.option('--re-max', type=float, default=None, help='Search |Re lambda| up to this value')
@click.option('--im-min', type=float, default=None, help='Lowest Im lambda searched')
@click.option('--order/--no-order', default=True, help='Also run the 2n-1 grid for the observed order')
@click.pass_context
def maxwell_spectrum(ctx, z0, z1, k, n, eps, mu, re_max, im_min, order):
    """Discrete eigenvalues against the characteristic-equation roots"""
    options = _boundary(z0, z1, k, n, eps, mu)
    options.update({'re_max': re_max, 'im_min': im_min, 'order': order})
    execute(ctx, 'maxwell1d.spectrum', options)


@cli.command()
@click.argument('name', type=click.Choice(SUITES))
@click.pass_context
def suite(ctx, name):
    """Run an acceptance suite"""
    execute(ctx, 'suite', {'name': name})


@cli.command()
@click.pass_context
def status(ctx):
    """Show active settings and tolerances"""
    settings = ctx.obj['settings']
    click.echo("mdisp Status:")
    click.echo(f"  Profile: {settings.__name__}")
    click.echo(f"  Threads: {settings.THREADS}")
    click.echo(f"  Seed: {ctx.obj['seed']}")
    click.echo(f"  Report timing: {'Yes' if settings.REPORT_TIMING else 'No'}")
    click.echo("  Tolerances:")
    for name, value in settings.tolerance_ledger().items():
        click.echo(f"    {name}: {value:g}")


if __name__ == '__main__':
    cli()
