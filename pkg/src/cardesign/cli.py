"""Command line interface: headless runs, replay verification, corpus
analysis, and archive export. Every failure exits nonzero with one
machine-readable JSON error line on stderr.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import CarDesignError
from .genome import DesignConfig
from .session import (Session, SessionConfig, compute_metrics, field_config,
                      lab_config, read_log, replay, run_headless)
from .stats import (AnalysisPlan, analyze_corpus, load_corpus, render_report,
                    write_plot_data)


def _fail(exc: Exception) -> None:
    click.echo(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
               err=True)
    sys.exit(1)


def _build_config(mode: str, seed: int, nv: int, nw: int, course: str,
                  cap: int | None) -> SessionConfig:
    if mode == "lab":
        return lab_config(seed)
    return field_config(seed, design=DesignConfig(nv=nv, nw=nw, course_id=course),
                        generation_cap=cap)


@click.group()
def main():
    """Mixed-initiative car design workbench."""


@main.command("run-headless")
@click.option("--mode", type=click.Choice(["field", "lab"]), default="lab")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--generations", type=int, default=40, show_default=True)
@click.option("--nv", type=int, default=7, help="vertex count (field mode)")
@click.option("--nw", type=int, default=4, help="wheel count (field mode)")
@click.option("--course", default="HillClimb", help="course id (field mode)")
@click.option("--cap", type=int, default=None, help="generation cap (field mode)")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="session log output path")
@click.option("--metrics-out", type=click.Path(dir_okay=False), default=None,
              help="also write the session metrics record")
def run_headless_cmd(mode, seed, generations, nv, nw, course, cap, out,
                     metrics_out):
    """Run an interaction-free session and write its log."""
    try:
        config = _build_config(mode, seed, nv, nw, course, cap)
        session = run_headless(config, generations, log_path=out)
        metrics = compute_metrics(session.header, session.events)
        if metrics_out:
            Path(metrics_out).write_text(
                json.dumps(metrics.to_record(), indent=2) + "\n",
                encoding="utf-8")
        best = session.best()
        click.echo(json.dumps({
            "log": str(out), "generations": len(session.generations),
            "best_fitness": None if best is None else best[1],
            "improvement_pct": metrics.improvement_pct}))
    except CarDesignError as exc:
        _fail(exc)


@main.command("replay")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--metrics-out", type=click.Path(dir_okay=False), default=None)
def replay_cmd(log_path, metrics_out):
    """Re-execute a session log and verify it reproduces bit-exactly."""
    try:
        header, events = read_log(log_path)
        metrics, best, _ = replay(header, events)
        if metrics_out:
            Path(metrics_out).write_text(
                json.dumps(metrics.to_record(), indent=2) + "\n",
                encoding="utf-8")
        click.echo(json.dumps({
            "result": "metrics match",
            "events": len(events),
            "best_fitness": None if best is None else best[1],
            "improvement_pct": metrics.improvement_pct}))
    except CarDesignError as exc:
        _fail(exc)


@main.command("metrics")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def metrics_cmd(log_path, out):
    """Compute the per-session metrics record from a log."""
    try:
        header, events = read_log(log_path)
        metrics = compute_metrics(header, events)
        text = json.dumps(metrics.to_record(), indent=2) + "\n"
        if out:
            Path(out).write_text(text, encoding="utf-8")
        else:
            click.echo(text, nl=False)
    except CarDesignError as exc:
        _fail(exc)


@main.command("analyze")
@click.option("--corpus", type=click.Path(exists=True, file_okay=False),
              required=True, help="directory of session-metrics *.json records")
@click.option("--plan", "plan_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="analysis plan JSON")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="report text output")
@click.option("--plot-data", type=click.Path(file_okay=False), default=None,
              help="directory for per-figure density CSVs")
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
@click.option("--max-fitness", type=float, default=None,
              help="cleaning bound: drop sessions beyond this best fitness")
def analyze_cmd(corpus, plan_path, out, plot_data, json_out, max_fitness):
    """Run the analysis plan over a corpus of session metrics."""
    try:
        plan = AnalysisPlan.from_file(plan_path)
        records, dropped = load_corpus(corpus, max_fitness=max_fitness)
        report = analyze_corpus(records, plan)
        text = render_report(report)
        if dropped:
            text += f"dropped {dropped} invalid session(s) during cleaning\n"
        Path(out).write_text(text, encoding="utf-8")
        if plot_data:
            write_plot_data(report, plot_data)
        if json_out:
            Path(json_out).write_text(
                json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        click.echo(json.dumps({"report": str(out), "sessions": len(records),
                               "dropped": dropped}))
    except (CarDesignError, OSError, json.JSONDecodeError) as exc:
        _fail(exc)


@main.command("export-archive")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--view", required=True,
              help="archive view: speed | wheel | geometry (or its "
                   "anonymized label from the log header)")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def export_archive_cmd(log_path, view, out):
    """Replay a log and export one elite archive's final snapshot."""
    try:
        header, events = read_log(log_path)
        _, _, session = replay(header, events)
        assignment = header.get("view_assignment", {})
        canonical = assignment.get(view, view)
        if canonical not in session.archives:
            raise CarDesignError(
                f"view {view!r} has no archive; choose one of "
                f"{sorted(session.archives)} or an insight label from the header")
        snapshot = {"view": canonical, "log": str(log_path),
                    "cells": session.archives[canonical].snapshot()}
        text = json.dumps(snapshot, indent=2) + "\n"
        if out:
            Path(out).write_text(text, encoding="utf-8")
        else:
            click.echo(text, nl=False)
    except CarDesignError as exc:
        _fail(exc)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8732, show_default=True)
@click.option("--data-dir", type=click.Path(file_okay=False), default=None,
              help="session log directory (or set CARDESIGN_DATA_DIR)")
def serve_cmd(host, port, data_dir):
    """Serve the HTTP/WebSocket API for the web client."""
    import uvicorn
    from .api import create_app
    uvicorn.run(create_app(data_dir=data_dir), host=host, port=port)


if __name__ == "__main__":
    main()
