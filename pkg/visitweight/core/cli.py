"""Run the visitweight analysis pipeline from the command line.

Every run writes into one output directory: ``effective.conf`` (the
configuration echo), ``logging.ini`` and ``visitweight.log``, and the CSV
and JSON artifacts of the subcommand.
"""
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from visitweight.core.config import VisitWeightConfig, write_run_files
from visitweight.core.dataset import dataset_to_csv, parse_dataset
from visitweight.core.diagnostics import BAND_SCALES, agreement_bands, \
    diagnose
from visitweight.core.exceptions import (ConfigError, DatasetValidationError,
                                         ElicitationError, IntensityFitError,
                                         NoEventsError, NumericalError,
                                         SimulationError, WindowPolicyError)
from visitweight.core.intensity import (build_risk_table, compute_weights,
                                        fit_intensity_models)
from visitweight.core.logs import LogManager
from visitweight.core.outcome import (fit_outcome, predict_trajectory,
                                      trajectory_auc)
from visitweight.core.sensitivity import (elicitation_curve, grid_to_csv,
                                          normalizer_builder_for,
                                          plausible_alpha_range, run_grid)
from visitweight.core.simulator import ScenarioSpec, simulate
from visitweight.core.windows import CATEGORIES, decompose_risk

__all__ = ('main',)

LOG = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL_GRID = 4


def _write_csv(frame, path):
    frame.to_csv(path, index=False, lineterminator='\n')
    LOG.info('Wrote %s.', path)


def _write_json(data, path):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + '\n',
                          encoding='utf-8')
    LOG.info('Wrote %s.', path)


def _load_dataset(run_config):
    """Read and validate the input dataset of a run."""
    if run_config.input is None:
        raise ConfigError('no input dataset given')
    path = Path(run_config.input)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise DatasetValidationError(f'cannot read {path}: {exc}') from exc
    dataset = parse_dataset(text, run_config.parse_options())
    LOG.info('Read %d visits of %d patients from %s.', dataset.n_visits,
             len(dataset), path)
    return dataset


def _fit_models(dataset, run_config):
    """Fit the intensity models, tolerating categories without events.

    A category without events among its fitting rows never receives a
    weighted visit, so only other failures stop the run.
    """
    risk_rows = build_risk_table(dataset, run_config.window_policy())
    model_set = fit_intensity_models(risk_rows, run_config.basis_dfs(),
                                     jobs=run_config.jobs, strict=False)
    fatal = {category: exc for category, exc in model_set.failures.items()
             if not isinstance(exc, NoEventsError)}
    if fatal or not model_set.models:
        raise IntensityFitError(fatal or model_set.failures, model_set)
    return model_set


def cmd_validate(run_config, out_dir):
    """Parse the input and report its size."""
    dataset = _load_dataset(run_config)
    _write_json({'valid': True, 'n_patients': len(dataset),
                 'n_visits': dataset.n_visits,
                 'n_censored': sum(1 for row in dataset.rows()
                                   if row.censored)},
                out_dir / 'validation.json')
    return EXIT_OK


def cmd_diagnose(run_config, out_dir):
    """Write the agreement diagnostics and quantile bands."""
    dataset = _load_dataset(run_config)
    report = diagnose(dataset, run_config.window_policy())
    (out_dir / 'diagnostics.json').write_text(report.to_json(),
                                              encoding='utf-8')
    frames = []
    for scale in BAND_SCALES:
        try:
            frames.append(agreement_bands(dataset, scale=scale).to_frame())
        except NumericalError as exc:
            LOG.warning('Agreement bands on the %s scale not computed: %s',
                        scale, exc)
    if frames:
        _write_csv(pd.concat(frames, ignore_index=True),
                   out_dir / 'bands.csv')
    return EXIT_OK


def cmd_classify(run_config, out_dir):
    """Write the category and time at risk of every gap."""
    dataset = _load_dataset(run_config)
    policy = run_config.window_policy()
    records = []
    columns = ['patient_id', 'visit_index', 'S', 'R', 'censored', 'valid',
               'category'] + [f'{category}_time' for category in CATEGORIES]
    for row in dataset.rows():
        if row.gap_forward is None:
            continue
        if row.gap_forward <= 0:
            LOG.warning('Skipping zero-length gap after visit %d of patient '
                        '%s.', row.visit_index, row.patient_id)
            continue
        decomposition = decompose_risk(row.gap_forward, row.rec_interval,
                                       censored=row.censored, policy=policy)
        record = {'patient_id': row.patient_id,
                  'visit_index': row.visit_index, 'S': row.gap_forward,
                  'R': row.rec_interval, 'censored': int(row.censored),
                  'valid': int(decomposition.valid),
                  'category': str(decomposition.event_category or '')}
        for category in CATEGORIES:
            record[f'{category}_time'] = decomposition.duration(category)
        records.append(record)
    _write_csv(pd.DataFrame.from_records(records, columns=columns),
               out_dir / 'classification.csv')
    return EXIT_OK


def cmd_fit_aar(run_config, out_dir):
    """Fit the AAR weights and outcome model next to the unweighted one."""
    dataset = _load_dataset(run_config)
    model_set = _fit_models(dataset, run_config)
    weights = compute_weights(dataset, model_set,
                              run_config.window_policy(),
                              cap=run_config.weight_cap)
    (out_dir / 'weights.csv').write_text(weights.to_csv(), encoding='utf-8')
    _write_csv(model_set.summary_frame(), out_dir / 'intensity_models.csv')

    fits = [fit_outcome(dataset, weights, basis_df=run_config.time_df,
                        unweighted=True)]
    if not run_config.unweighted:
        fits.insert(0, fit_outcome(dataset, weights,
                                   basis_df=run_config.time_df))
    trajectories = [predict_trajectory(fit, 0.0, run_config.timerange,
                                       run_config.plot_increment).to_frame()
                    for fit in fits]
    _write_csv(pd.concat(trajectories, ignore_index=True),
               out_dir / 'trajectories.csv')

    aucs = {fit.label: trajectory_auc(fit, run_config.timerange,
                                      run_config.increment)
            for fit in fits}
    for label, auc in aucs.items():
        LOG.info('AUC of the %s fit: %.4f', label, auc)
    _write_json({'label': fits[0].label, 'auc': aucs[fits[0].label],
                 'auc_rounded': round(aucs[fits[0].label], 1),
                 'aucs': aucs, 'n_visits': fits[0].n_rows,
                 'n_patients': fits[0].n_clusters,
                 'timerange': run_config.timerange,
                 'increment': run_config.increment},
                out_dir / 'summary.json')
    return EXIT_OK


def cmd_sensitivity(run_config, out_dir):
    """Write the AUC heatmap of the tilting grid."""
    dataset = _load_dataset(run_config)
    model_set = _fit_models(dataset, run_config)
    grid = run_grid(dataset, model_set, run_config.window_policy(),
                    run_config.grid_spec(), run_config.tilt_config(),
                    jobs=run_config.jobs, time_df=run_config.time_df,
                    normalizer_df=run_config.normalizer_df,
                    timerange=run_config.timerange,
                    increment=run_config.increment,
                    weight_cap=run_config.weight_cap,
                    trajectory_cells=run_config.trajectory_cells,
                    plot_increment=run_config.plot_increment)
    (out_dir / 'heatmap.csv').write_text(grid_to_csv(grid), encoding='utf-8')
    if grid.trajectories:
        frames = [grid.trajectories[cell].to_frame()
                  for cell in sorted(grid.trajectories)]
        _write_csv(pd.concat(frames, ignore_index=True),
                   out_dir / 'trajectories.csv')
    if grid.is_partial:
        LOG.error('Sensitivity grid is partial: %d cell(s) failed.',
                  len(grid.failed_cells))
        return EXIT_PARTIAL_GRID
    return EXIT_OK


def cmd_elicit(run_config, out_dir):
    """Write elicitation curves and the plausible alpha range."""
    dataset = _load_dataset(run_config)
    model_set = _fit_models(dataset, run_config)
    policy = run_config.window_policy()
    tilt = run_config.tilt_config()
    builder = None
    if not run_config.no_normalizer:
        builder = normalizer_builder_for(dataset, tilt,
                                         run_config.normalizer_df, policy)
    curves = [elicitation_curve(rec_interval, alpha, model_set, builder,
                                tilt, policy)
              for rec_interval in run_config.elicitation_intervals
              for alpha in run_config.elicitation_alphas]
    for curve in curves:
        if not curve.is_monotone:
            raise ElicitationError(
                f'elicitation curve for R={curve.rec_interval:g}, '
                f'alpha={curve.alpha:g} is not monotone in D')
    _write_csv(pd.concat([curve.to_frame() for curve in curves],
                         ignore_index=True), out_dir / 'elicitation.csv')
    plausible = plausible_alpha_range(
        model_set, builder, r_set=run_config.elicitation_intervals,
        targets=run_config.elicitation_targets, policy=policy)
    _write_json(plausible.to_dict(), out_dir / 'plausible_range.json')
    return EXIT_OK


def cmd_simulate(run_config, out_dir):
    """Write a simulated dataset and its true mean trajectory."""
    spec = ScenarioSpec.from_config(run_config.spec) if run_config.spec \
        else ScenarioSpec()
    if run_config.seed is not None:
        spec = replace(spec, seed=run_config.seed)
    truth_times = np.linspace(0.0, spec.horizon,
                              int(round(spec.horizon /
                                        run_config.plot_increment)) + 1)
    output = simulate(spec, jobs=run_config.jobs, truth_times=truth_times)
    dataset_path = Path(run_config.dataset or out_dir / 'dataset.csv')
    truth_path = Path(run_config.truth or out_dir / 'truth.csv')
    dataset_path.write_text(dataset_to_csv(output.dataset), encoding='utf-8')
    LOG.info('Wrote %s.', dataset_path)
    _write_csv(output.truth.to_frame(), truth_path)
    _write_json({'mechanism': str(spec.mechanism), 'seed': spec.seed,
                 'n_patients': len(output.dataset),
                 'n_visits': output.dataset.n_visits,
                 'truth_auc': output.truth.auc(),
                 'truth_method': output.truth.method},
                out_dir / 'simulation.json')
    return EXIT_OK


COMMANDS = {'validate': cmd_validate, 'diagnose': cmd_diagnose,
            'classify': cmd_classify, 'fit-aar': cmd_fit_aar,
            'sensitivity': cmd_sensitivity, 'elicit': cmd_elicit,
            'simulate': cmd_simulate}


def main(argv=None):
    """Parse the command line, run one subcommand and return its exit code.

    Args:
        argv (list): arguments without the program name; None reads
            ``sys.argv``.

    Returns:
        int: 0 on success, 2 on invalid input or configuration, 3 on a
        numerical failure and 4 when the sensitivity grid is partial.

    """
    try:
        run_config = VisitWeightConfig(argv).run_config()
    except ConfigError as exc:
        LOG.error('%s', exc)
        return EXIT_VALIDATION

    out_dir = Path(run_config.out)
    write_run_files(run_config, out_dir)
    LogManager.load_config_file(out_dir / 'logging.ini', run_config.debug)
    LOG.info('Running %s into %s.', run_config.command, out_dir)

    try:
        return COMMANDS[run_config.command](run_config, out_dir)
    except (DatasetValidationError, ConfigError, WindowPolicyError,
            SimulationError) as exc:
        LOG.error('%s', exc)
        return EXIT_VALIDATION
    except NumericalError as exc:
        LOG.error('%s', exc)
        return EXIT_NUMERICAL
