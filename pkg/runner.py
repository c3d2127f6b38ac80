import logging
import time

import numpy as np

from config import ConfigError, get_config
from impedance import (ImpedanceError, assemble_condition, boundary_operator, cayley_kz, classify_condition,
                       convergence_table, fk_extensions, fk_gap_trend, parse_impedance)
from linrel import RelationError, adjoint_relation, cayley, classify_relation, subspace_distance
from maxwell1d import (GREEN_CASES, Maxwell1DError, Maxwell1DModel, build_generator, characteristic_roots,
                       discrete_green_residual, evolve_cn, green_identity_report, numerical_range_and_resolvent,
                       parse_pulse, spectrum_convergence, spectrum_report, upper_half_plane_grid)
from models import Report, RunConfig
from storage import export_basis_table, load_contraction, load_relation, save_contraction, save_relation
from tracespace import (SurfaceError, biorthogonality_residual, build_surface, gram_residual, n_cross_residual,
                        trace_weights)
from utils import encode_matrix, parse_complex

logger = logging.getLogger(__name__)


class Runner:
    """Executes one RunConfig and collects its Report"""

    def __init__(self, run_config, settings=None):
        self.run_config = run_config.validate()
        self.settings = run_config.settings(settings or get_config())
        self.options = dict(run_config.options)
        self.seed = run_config.seed

    def new_report(self):
        return Report(
            command=self.run_config.command,
            config=self.run_config.to_dict(),
            tolerances=self.settings.tolerance_ledger(),
            schema_version=self.settings.SCHEMA_VERSION,
        )

    def run(self):
        handlers = {
            'relation.check': self.relation_check,
            'surface.info': self.surface_info,
            'impedance.classify': self.impedance_classify,
            'impedance.extend': self.impedance_extend,
            'maxwell1d.evolve': self.maxwell_evolve,
            'maxwell1d.range': self.maxwell_range,
            'maxwell1d.green': self.maxwell_green,
            'maxwell1d.spectrum': self.maxwell_spectrum,
            'suite': self.suite,
        }
        started = time.perf_counter()
        report = self.new_report()
        logger.info('running %s', self.run_config.command)
        handlers[self.run_config.command](report)
        if self.settings.REPORT_TIMING:
            report.timing = dict(report.timing or {}, seconds=round(time.perf_counter() - started, 3))
        if not report.passed:
            logger.warning('%s: failed checks %s', self.run_config.command, ', '.join(report.failures))
        return report

    # helpers

    def _surface(self):
        name = self.options.get('surface', 'sphere')
        truncation = self.options.get('lmax') or self.options.get('kmax') or self.options.get('truncation') or 4
        try:
            return build_surface(name, truncation, self.options.get('quad_factor'))
        except SurfaceError as e:
            raise ConfigError('surface', str(e))

    def _impedance(self, default='const:1.0'):
        try:
            return parse_impedance(self.options.get('z') or default)
        except ImpedanceError as e:
            raise ConfigError('z', str(e))

    def _model(self):
        try:
            return Maxwell1DModel(self.options.get('eps', 1.0), self.options.get('mu', 1.0))
        except Maxwell1DError as e:
            raise ConfigError('eps', str(e))

    def _boundary(self):
        """2x2 contraction from --K, otherwise the impedance pair (z0, z1)"""
        if self.options.get('K'):
            result = load_contraction(self.options['K'])
            if not result['success']:
                raise ConfigError('K', result['error'])
            if result['dim'] != 2:
                raise ConfigError('K', f"1-D boundary contraction must be 2x2, got {result['dim']}x{result['dim']}")
            return result['contraction']
        try:
            return (parse_complex(self.options.get('z0', 1.0)), parse_complex(self.options.get('z1', 1.0)))
        except ValueError as e:
            raise ConfigError('z0', str(e))

    def _generator(self, n=None):
        try:
            return build_generator(self._model(), self._boundary(), n or self.options.get('n', 400))
        except Maxwell1DError as e:
            raise ConfigError('bc', str(e))

    # commands

    def relation_check(self, report):
        result = load_relation(self.options['file'])
        if not result['success']:
            raise ConfigError('file', result['error'])
        rel = result['relation']
        tol = self.settings.DISSIPATIVE_TOL
        verdict = classify_relation(rel, self.options.get('samples', 0), tol=tol, seed=self.seed)
        report.verdicts['relation'] = verdict.to_dict()

        report.check('maximal_implies_dissipative', verdict.is_dissipative or not verdict.is_maximal_dissipative)
        report.check('selfadjoint_implies_symmetric', verdict.is_symmetric or not verdict.is_selfadjoint)
        involution = subspace_distance(adjoint_relation(adjoint_relation(rel)), rel)
        report.check('adjoint_involution', involution <= tol, involution, tol)
        if verdict.is_dissipative:
            contraction = cayley(rel, tol=tol)
            report.verdicts['cayley_domain_full'] = contraction.is_full
            report.verdicts['cayley_norm'] = contraction.norm
            report.check('maximality_routes_agree', contraction.is_full == verdict.is_maximal_dissipative)
            if self.options.get('cayley'):
                if not contraction.is_full:
                    raise ConfigError('cayley', 'Cayley transform is not defined on the whole space')
                save_contraction(contraction, self.options['cayley'])
                report.verdicts['cayley_file'] = self.options['cayley']
        elif self.options.get('cayley'):
            raise ConfigError('cayley', 'relation is not dissipative')
        if self.options.get('adjoint'):
            save_relation(adjoint_relation(rel), self.options['adjoint'])
            report.verdicts['adjoint_file'] = self.options['adjoint']

    def surface_info(self, report):
        surf = self._surface()
        gram = gram_residual(surf)
        report.verdicts.update(surf.info())
        report.verdicts['gram_residual'] = gram
        report.verdicts['modes'] = [
            {'label': label, 'lambda': lam, 'pi_weight': s}
            for label, lam, s in zip(surf.labels(), surf.family_lambdas(), trace_weights(surf).s)
        ]
        report.check('gram_identity', gram <= self.settings.GRAM_TOL, gram, self.settings.GRAM_TOL)
        coeff = biorthogonality_residual(surf, 'coefficients')
        quad = biorthogonality_residual(surf, 'quadrature')
        report.check('biorthogonality_coefficients', coeff <= self.settings.BIORTHOGONALITY_TOL, coeff,
                     self.settings.BIORTHOGONALITY_TOL)
        report.check('biorthogonality_quadrature', quad <= self.settings.GRAM_TOL, quad, self.settings.GRAM_TOL)
        ncross = n_cross_residual(surf)
        report.check('n_cross_pointwise', ncross <= self.settings.GRAM_TOL, ncross, self.settings.GRAM_TOL)
        if self.options.get('export'):
            exported = export_basis_table(surf, self.options['export'])
            report.verdicts['export'] = {'modes': exported['modes'], 'nodes': exported['nodes']}

    def impedance_classify(self, report):
        surf = self._surface()
        z = self._impedance()
        try:
            bop = boundary_operator(surf, z)
            k = cayley_kz(bop)
        except ImpedanceError as e:
            raise ConfigError('z', str(e))
        cond = assemble_condition(surf, k)
        verdict = classify_condition(cond)
        report.verdicts.update({
            'surface': surf.info(),
            'impedance': z.to_dict(),
            'operator': bop.verdict(),
            'condition': verdict.to_dict(),
            'contraction_norm': k.norm,
        })
        tol = self.settings.DISSIPATIVE_TOL
        report.check('operator_accretive', bop.accretivity_margin >= -self.settings.PSD_TOL,
                     bop.accretivity_margin, -self.settings.PSD_TOL)
        report.check('condition_m_dissipative', verdict.m_dissipative, verdict.dissipative_margin, -tol)
        report.check('contraction_recovery', verdict.contraction_recovery <= self.settings.ROUNDTRIP_TOL,
                     verdict.contraction_recovery, self.settings.ROUNDTRIP_TOL)
        if z.kind == 'constant':
            alpha = z.params['alpha']
            lam = surf.family_lambdas()
            g, h, c = surf.blocks
            expected = np.empty(surf.dim, dtype=complex)
            expected[g], expected[h], expected[c] = alpha * lam[g], alpha, alpha / lam[c]
            expected = (expected - 1) / (expected + 1)
            deviation = float(np.max(np.abs(k.matrix - np.diag(expected))))
            report.check('constant_cayley_closed_form', deviation <= self.settings.ROUNDTRIP_TOL, deviation,
                         self.settings.ROUNDTRIP_TOL)
        if self.options.get('convergence'):
            report.tables['convergence'] = convergence_table(surf.name, self.options['convergence'], z,
                                                             surf.quad_factor)
        if self.options.get('matrices'):
            report.matrices['K'] = encode_matrix(k.matrix)
            report.matrices['T'] = encode_matrix(bop.matrix)

    def impedance_extend(self, report):
        surf = self._surface()
        z = self._impedance()
        method = self.options.get('method', 'friedrichs')
        try:
            result = fk_extensions(surf, z, threshold=self.settings.FK_DOMAIN_THRESHOLD)
        except (ImpedanceError, RelationError) as e:
            raise ConfigError('z', str(e))
        summary = result.summary()
        report.verdicts.update({'surface': surf.info(), 'impedance': z.to_dict(), 'method': method})
        report.verdicts.update(summary)
        cond = result.condition_f if method == 'friedrichs' else result.condition_k
        report.check(f'{method}_m_dissipative', summary[method]['m_dissipative'],
                     summary[method]['dissipative_margin'], -self.settings.DISSIPATIVE_TOL)
        report.check('resolvent_ordering', result.ordering_margin >= -self.settings.PSD_TOL,
                     result.ordering_margin, -self.settings.PSD_TOL)
        report.matrices['K'] = encode_matrix(cond.contraction.matrix)
        report.matrices['T0'] = encode_matrix(cond.t0)
        report.matrices['T1'] = encode_matrix(cond.t1)
        if self.options.get('trend'):
            report.tables['gap_trend'] = fk_gap_trend(surf.name, self.options['trend'], z, surf.quad_factor,
                                                      self.settings.FK_DOMAIN_THRESHOLD)

    def maxwell_evolve(self, report):
        gen = self._generator()
        try:
            psi0 = parse_pulse(gen, self.options.get('pulse', 'gaussian:x0=0.5,w=0.05'))
            trace = evolve_cn(gen, psi0, self.options.get('dt', 1e-3), self.options.get('steps', 1000))
        except (Maxwell1DError, ValueError) as e:
            raise ConfigError('pulse', str(e))
        report.tables['trace'] = trace.to_frame()
        increase, drift = trace.max_relative_increase(), trace.relative_drift()
        energies = trace.energies
        report.verdicts.update({
            'n': gen.n,
            'contraction_norm': gen.contraction.norm,
            'unitary': gen.contraction.is_unitary(),
            'initial_energy': float(energies[0]),
            'final_energy': float(energies[-1]),
            'max_relative_increase': increase,
            'relative_drift': drift,
        })
        report.check('energy_non_increasing', increase <= self.settings.ENERGY_TOL, increase,
                     self.settings.ENERGY_TOL)
        if gen.contraction.is_unitary():
            report.check('energy_conserved', drift <= self.settings.CONSERVATION_TOL, drift,
                         self.settings.CONSERVATION_TOL)

    def maxwell_range(self, report):
        gen = self._generator()
        samples = upper_half_plane_grid(self.options.get('samples', 200))
        result = numerical_range_and_resolvent(gen, samples, tol=self.settings.RESOLVENT_TOL)
        report.verdicts.update(result)
        report.verdicts['contraction_norm'] = gen.contraction.norm
        scale_tol = self.settings.DISSIPATIVE_TOL * result['scale']
        report.check('eigenvalues_dissipative', result['max_eigenvalue_imag'] <= scale_tol,
                     result['max_eigenvalue_imag'], scale_tol)
        report.check('resolvent_bound', result['resolvent_bound_holds'], result['max_resolvent_ratio'],
                     1 + self.settings.RESOLVENT_TOL)

    def maxwell_green(self, report):
        model = self._model()
        case = self.options.get('case', 'trig1')
        cases = list(GREEN_CASES) if case == 'all' else [case]
        results = []
        for name in cases:
            try:
                result = green_identity_report(model, name)
            except Maxwell1DError as e:
                raise ConfigError('case', str(e))
            results.append(result)
            report.check(f'green_{name}', result['residual'] <= self.settings.GREEN_TOL, result['residual'],
                         self.settings.GREEN_TOL)
        report.verdicts['continuum'] = results

        gen = self._generator(self.options.get('n', 64))
        rng = np.random.default_rng(self.seed)
        psi = rng.standard_normal(2 * gen.n) + 1j * rng.standard_normal(2 * gen.n)
        phi = rng.standard_normal(2 * gen.n) + 1j * rng.standard_normal(2 * gen.n)
        residual = discrete_green_residual(gen, psi, phi)
        report.verdicts['discrete_residual'] = residual
        report.check('green_discrete', residual <= self.settings.DISCRETE_GREEN_TOL, residual,
                     self.settings.DISCRETE_GREEN_TOL)

    def maxwell_spectrum(self, report):
        model = self._model()
        gen = self._generator()
        re_max = float(self.options.get('re_max', 5 * np.pi + 0.5))
        im_min = float(self.options.get('im_min', -5.0))
        roots = characteristic_roots(model, gen.contraction.matrix, re_max=re_max, im_min=im_min)
        table, extra = spectrum_report(gen, roots, re_max, im_min)
        report.tables['spectrum'] = table
        worst = float(table['relative_error'].max()) if len(table) else 0.0
        report.verdicts.update({'n': gen.n, 'roots': len(roots), 'max_relative_error': worst,
                                'min_overlap': float(table['overlap'].min()) if len(table) else None,
                                'twin_eigenvalues': extra['twins'], 'unmatched_eigenvalues': extra['unmatched']})
        report.check('spectrum_matches_oracle', worst <= self.settings.SPECTRUM_TOL, worst,
                     self.settings.SPECTRUM_TOL)
        if len(roots) and self.options.get('order', True):
            frame, order = spectrum_convergence(model, gen.contraction, [gen.n, 2 * gen.n - 1], roots, first=table)
            report.tables['convergence'] = frame
            report.verdicts['observed_order'] = order
            if np.isfinite(order):
                report.check('convergence_order', order >= self.settings.MIN_ORDER, order, self.settings.MIN_ORDER)

    def suite(self, report):
        from suites import run_suite
        run_suite(self.options['name'], report, self.settings, self.seed)


def run(config, settings=None):
    """Convenience function to execute a RunConfig (or its dict form)"""
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    return Runner(config, settings).run()
