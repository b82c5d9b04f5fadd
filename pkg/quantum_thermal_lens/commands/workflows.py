from pathlib import Path
from typing import Optional

from .registry import command, output_directory, CommandOutcome
from ..counting_simulation import simulate
from ..estimators import g_si, denoise
from ..file_formats import load_trace, save_trace, save_table, write_json, fit_report, denoise_report, svg_plots
from ..fitting import fit, profile_timescales, TraceFitter
from ..run_config import RunConfig


@command('simulate')
def cmd_simulate(config: RunConfig, trace_path: Optional[Path] = None) -> CommandOutcome:
    """Simulate a coincidence trace for the configured scenario"""
    directory = output_directory(config)
    trace = simulate(config.source, config.scenario, config.lens)
    outcome = CommandOutcome()

    csv_path = directory / 'trace.csv'
    save_trace(trace, csv_path)
    outcome.written.append(csv_path)
    if config.output.plots:
        svg_path = directory / 'trace.svg'
        svg_plots.plot_trace(trace, svg_path, config.scenario)
        outcome.written.append(svg_path)
    return outcome


@command('fit', needs_trace=True)
def cmd_fit(config: RunConfig, trace_path: Optional[Path] = None) -> CommandOutcome:
    """Fit the lens parameters to a coincidence trace"""
    trace = load_trace(trace_path, default_bin_width=config.source.bin_width)
    directory = output_directory(config)
    spec = config.fit_spec(trace)
    result = fit(trace, spec, n_jobs=config.fit.n_jobs)

    profiles = None
    if config.fit.profile:
        profiles = profile_timescales(trace, spec, result, n_points=config.fit.profile_points,
                                      span_decades=config.fit.profile_span, n_jobs=config.fit.n_jobs)

    outcome = CommandOutcome(ok=result.converged, message=result.message)
    report_path = directory / 'fit_report.json'
    write_json(report_path, fit_report(result, spec, profiles))
    outcome.written.append(report_path)
    if config.output.plots:
        svg_path = directory / 'fit_overlay.svg'
        model_counts = TraceFitter(trace, spec).model_counts(result.values)
        svg_plots.plot_fit_overlay(trace, model_counts, svg_path, config.scenario, result.reduced_chi2)
        outcome.written.append(svg_path)
    return outcome


@command('gsi', needs_trace=True)
def cmd_gsi(config: RunConfig, trace_path: Optional[Path] = None) -> CommandOutcome:
    """Windowed cross-correlation g of a trace"""
    trace = load_trace(trace_path, default_bin_width=config.source.bin_width)
    directory = output_directory(config)
    correlation = g_si(trace, config.source, config.fit.window)
    outcome = CommandOutcome()

    csv_path = directory / 'gsi.csv'
    save_table(csv_path, ('t_s', 'g', 'g_err', 'valid'),
               [correlation.t, correlation.g, correlation.g_err, correlation.valid])
    outcome.written.append(csv_path)
    if config.output.plots:
        svg_path = directory / 'gsi.svg'
        svg_plots.plot_gsi(correlation, svg_path, config.scenario)
        outcome.written.append(svg_path)
    return outcome


@command('denoise', needs_trace=True)
def cmd_denoise(config: RunConfig, trace_path: Optional[Path] = None) -> CommandOutcome:
    """True-signal trace recovered from the coincidences, with the SNR report"""
    trace = load_trace(trace_path, default_bin_width=config.source.bin_width)
    directory = output_directory(config)
    denoised = denoise(trace, config.source, config.scenario.t_on)
    outcome = CommandOutcome()

    csv_path = directory / 'denoised.csv'
    save_table(csv_path, ('t_s', 's_t', 's_t_err', 's_s'),
               [denoised.t, denoised.s_t, denoised.s_t_err, denoised.s_s])
    report_path = directory / 'denoise_report.json'
    write_json(report_path, denoise_report(denoised))
    outcome.written.extend([csv_path, report_path])
    if config.output.plots:
        svg_path = directory / 'denoised.svg'
        svg_plots.plot_denoised(denoised, svg_path, config.scenario)
        outcome.written.append(svg_path)
    return outcome
