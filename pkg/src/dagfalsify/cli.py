"""Command-line front end.

Exit codes of ``falsify`` encode the verdict: 0 falsifiable and not
rejected, 1 falsifiable and rejected, 2 not falsifiable. Anything above 2 is
an error (3 for bad input or usage, 4 for unexpected failures).

Every option can also be set through an environment variable
``DAGFALSIFY_<FLAG>`` (for example ``DAGFALSIFY_ALPHA``) or a JSON config
file passed with ``--config``; flags win over environment variables, which
win over the config file.
"""

from __future__ import annotations

import csv
import json
import logging
import secrets
import sys
from pathlib import Path

import click

from . import __version__
from .citests import TEST_NAMES, RegressorSpec, make_test
from .experiments import EDGE_LEVELS, NODE_LEVELS, level_trend, mean_by_level, run_benchmark, run_type1
from .experts import EdgeExpertConfig, NodeExpertConfig, de_e, de_v
from .falsifier import p_lmc
from .graph import GraphError, shd
from .io import BindError, ParseError, bind_dataset, read_dataset, read_graph, write_dataset, write_graph, write_report
from .synth import MECHANISMS, NOISE_KINDS, ScmSpec, er_dag, sample_scm

logger = logging.getLogger("dagfalsify")

ENV_PREFIX = "DAGFALSIFY"
EXIT_INPUT_ERROR = 3
EXIT_INTERNAL_ERROR = 4

T_HELP = ("Number of node permutations T (default 1000). Rejecting at level alpha only needs "
          "about 1/alpha permutations; larger T sharpens the p-value estimate.")


def opt(*decls, **kwargs):
    """``click.option`` with an environment variable mirroring the long flag."""
    long = next(d for d in decls if d.startswith("--")).split("/")[0]
    kwargs.setdefault("envvar", f"{ENV_PREFIX}_{long[2:].replace('-', '_').upper()}")
    kwargs.setdefault("show_envvar", True)
    return click.option(*decls, **kwargs)


def _float_list(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _load_config(path: str) -> dict:
    """Per-command default maps from a RunConfig file.

    Accepts a RunConfig (``{"command": ..., <params>}``), a mapping of
    command names to parameter sets, or any artifact that embeds a RunConfig
    under ``"config"`` (reports and metadata sidecars).
    """
    raw = json.loads(Path(path).read_text())
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]
    if "command" in raw:
        params = {k: v for k, v in raw.items() if k not in ("command", "tool_version")}
        return {raw["command"]: params}
    return raw


def _write_meta(artifact: str | Path, config: dict) -> None:
    meta = {"tool_version": __version__, "artifact": Path(artifact).name, "config": config}
    Path(f"{artifact}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _run_config(command: str, **params) -> dict:
    out = {"command": command, "tool_version": __version__}
    for k, v in params.items():
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _write_csv(rows: list[dict], path: str | None) -> None:
    if not rows:
        return
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    finally:
        if path:
            fh.close()


@click.group(context_settings={"help_option_names": ["-h", "--help"], "show_default": True})
@click.version_option(__version__, prog_name="dagfalsify")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              envvar=f"{ENV_PREFIX}_CONFIG", help="JSON RunConfig file supplying option defaults.")
@click.option("-v", "--verbose", count=True, help="Log progress (repeat for debug output).")
@click.pass_context
def cli(ctx, config_path, verbose):
    """Falsify causal DAGs by comparing their implied independences with node permutations."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if config_path:
        ctx.default_map = _load_config(config_path)


@cli.command()
@opt("--graph", required=True, type=click.Path(exists=True, dir_okay=False), help="Graph text file.")
@opt("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="CSV with a header row.")
@opt("--test", type=click.Choice(TEST_NAMES), default="pcorr", help="Conditional independence test.")
@opt("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.05)
@opt("--permutations", "-T", type=click.IntRange(min=1), default=1000, help=T_HELP)
@opt("--seed", type=int, default=None, help="Base seed; generated and reported when absent.")
@opt("--workers", type=click.IntRange(min=1), default=1, help="Processes for CI evaluation.")
@opt("--out", type=click.Path(dir_okay=False), default=None, help="Report JSON path.")
@opt("--regressor-config", type=click.Path(exists=True, dir_okay=False), default=None,
     help="JSON regressor spec for GCM.")
@opt("--missing", type=click.Choice(["reject", "drop-rows"]), default="reject",
     help="Policy for rows with missing values.")
@opt("--conservative-pvalue/--plain-pvalue", default=False,
     help="Report (1 + count) / (1 + T) instead of count / T.")
@opt("--exclude", multiple=True, default=(), help="Node to leave out of the evaluation (repeatable).")
@opt("--confidence", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.95,
     help="Confidence level of the p_lmc interval.")
@opt("--cache/--no-cache", default=True, help="Share CI outcomes across permutations.")
def falsify(graph, data, test, alpha, permutations, seed, workers, out, regressor_config, missing,
            conservative_pvalue, exclude, confidence, cache):
    """Score a DAG against data; the exit code encodes the verdict."""
    if seed is None:
        seed = secrets.randbits(63)
        click.echo(f"seed not given; using {seed}", err=True)
    reg = RegressorSpec.from_dict(json.loads(Path(regressor_config).read_text())) if regressor_config else None
    g, d = bind_dataset(read_graph(graph), read_dataset(data, missing), exclude)
    ci = make_test(test, reg)
    config = _run_config(
        "falsify", graph=graph, data=data, test=test, alpha=alpha, permutations=permutations, seed=seed,
        regressor=ci.regressor.to_dict() if test == "gcm" else None, missing=missing,
        conservative_pvalue=conservative_pvalue, exclude=sorted(exclude), confidence=confidence,
    )
    report = p_lmc(g, d, ci, alpha, permutations, seed, workers=workers, use_cache=cache,
                   confidence=confidence, conservative=conservative_pvalue, config=config)
    if out:
        write_report(report, out)
    lo, hi = report.p_lmc_ci
    click.echo(f"verdict: {report.verdict}")
    click.echo(f"p_lmc = {report.p_lmc:.4g}  [{lo:.4g}, {hi:.4g}] ({confidence:.0%}, T={report.n_permutations})")
    click.echo(f"p_tpa = {report.p_tpa:.4g}  f_lmc = {report.f_lmc:.4g} "
               f"({len(report.v_lmc)}/{report.n_tested_triples} triples)")
    if report.v_md:
        click.echo(f"undetected ancestor dependences: {len(report.v_md)}")
    for t, p in sorted(zip(report.v_lmc, report.v_lmc_pvalues), key=lambda tp: (tp[1], tp[0])):
        z = ", ".join(g.name(k) for k in t.z)
        click.echo(f"  {g.name(t.i)} _||_ {g.name(t.j)} | {{{z}}}  rejected, p = {p:.3g}")
    if report.failed_queries:
        click.echo(f"{len(report.failed_queries)} CI queries failed and were excluded", err=True)
    return report.exit_code


@cli.command()
@opt("--nodes", "-n", type=click.IntRange(min=1), default=10)
@opt("--degree", "-d", type=click.FloatRange(min=0), default=2.0, help="Expected node degree.")
@opt("--mechanism", type=click.Choice(MECHANISMS), default="linear")
@opt("--noise", type=click.Choice(NOISE_KINDS), default="gaussian")
@opt("--noise-params", default="{}", help="JSON object overriding noise parameters.")
@opt("--samples", "-N", type=click.IntRange(min=4), default=1000)
@opt("--seed", type=int, default=None)
@opt("--out-graph", required=True, type=click.Path(dir_okay=False))
@opt("--out-data", required=True, type=click.Path(dir_okay=False))
def simulate(nodes, degree, mechanism, noise, noise_params, samples, seed, out_graph, out_data):
    """Draw an Erdos-Renyi DAG and a dataset sampled from an SCM on it."""
    if seed is None:
        seed = secrets.randbits(63)
    width = len(str(max(nodes - 1, 0)))
    g = er_dag(nodes, degree, seed, tuple(f"X{k:0{width}d}" for k in range(nodes)))
    spec = ScmSpec(g, mechanism, noise, json.loads(noise_params), seed=seed)
    write_graph(g, out_graph)
    write_dataset(sample_scm(spec, samples), out_data)
    config = _run_config("simulate", nodes=nodes, degree=degree, mechanism=mechanism, noise=noise,
                         noise_params=noise_params, samples=samples, seed=seed,
                         out_graph=out_graph, out_data=out_data)
    _write_meta(out_graph, config)
    _write_meta(out_data, config)
    click.echo(f"{nodes} nodes, {len(g.edges)} edges, {samples} samples (seed {seed})")
    return 0


@cli.command()
@opt("--graph", required=True, type=click.Path(exists=True, dir_okay=False))
@opt("--expert", type=click.Choice(["node", "edge"]), required=True)
@opt("--knowledge-fraction", type=click.FloatRange(0, 1), default=1.0, help="Node expert |K|/|V|.")
@opt("--n-add", type=click.IntRange(min=0), default=0)
@opt("--n-remove", type=click.IntRange(min=0), default=0)
@opt("--n-flip", type=click.IntRange(min=0), default=0)
@opt("--shd-ratio", type=click.FloatRange(min=0), default=None,
     help="Edge expert: target SHD/|E|, split into additions, removals and flips.")
@opt("--seed", type=int, default=None)
@opt("--out", required=True, type=click.Path(dir_okay=False))
def corrupt(graph, expert, knowledge_fraction, n_add, n_remove, n_flip, shd_ratio, seed, out):
    """Apply a simulated domain expert to a graph and print the SHD to the input."""
    if seed is None:
        seed = secrets.randbits(63)
    g = read_graph(graph)
    if expert == "node":
        given = de_v(g, NodeExpertConfig(knowledge_fraction, seed))
    else:
        if shd_ratio is not None:
            cfg = EdgeExpertConfig.from_shd(int(round(shd_ratio * len(g.edges))), len(g.edges), seed)
        else:
            cfg = EdgeExpertConfig(n_add, n_remove, n_flip, seed)
        given = de_e(g, cfg)
    write_graph(given, out)
    _write_meta(out, _run_config("corrupt", graph=graph, expert=expert, knowledge_fraction=knowledge_fraction,
                                 n_add=n_add, n_remove=n_remove, n_flip=n_flip, shd_ratio=shd_ratio,
                                 seed=seed, out=out))
    click.echo(f"SHD {shd(given, g)}")
    return 0


@cli.command()
@opt("--nodes", "-n", type=click.IntRange(min=2), default=10)
@opt("--degree", "-d", type=click.FloatRange(min=0), default=2.0)
@opt("--mechanism", type=click.Choice(MECHANISMS), default="linear")
@opt("--test", type=click.Choice(TEST_NAMES), default=None,
     help="CI test; pcorr for linear and gcm for mlp when omitted.")
@opt("--node-levels", default=",".join(map(str, NODE_LEVELS)), help="Node expert |K|/|V| grid.")
@opt("--edge-levels", default=",".join(map(str, EDGE_LEVELS)), help="Edge expert SHD/|E| grid.")
@opt("--replicates", "-R", type=click.IntRange(min=1), default=20)
@opt("--samples", "-N", type=click.IntRange(min=4), default=1000)
@opt("--permutations", "-T", type=click.IntRange(min=1), default=1000, help=T_HELP)
@opt("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.05)
@opt("--seed", type=int, default=None)
@opt("--workers", type=click.IntRange(min=1), default=1)
@opt("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout when omitted).")
def benchmark(nodes, degree, mechanism, test, node_levels, edge_levels, replicates, samples,
              permutations, alpha, seed, workers, out):
    """Sweep node and edge experts over random graphs; emit a tidy CSV."""
    if seed is None:
        seed = secrets.randbits(63)
    rows = run_benchmark(nodes, degree, mechanism, test, _float_list(node_levels), _float_list(edge_levels),
                         replicates, samples, permutations, alpha, seed, workers)
    _write_csv(rows, out)
    if out:
        _write_meta(out, _run_config("benchmark", nodes=nodes, degree=degree, mechanism=mechanism, test=test,
                                     node_levels=node_levels, edge_levels=edge_levels, replicates=replicates,
                                     samples=samples, permutations=permutations, alpha=alpha, seed=seed,
                                     out=out))
    for expert in ("node", "edge"):
        means = mean_by_level(rows, expert)
        if means:
            cells = "  ".join(f"{lv:g}: {m:.4f}" for lv, m in means.items())
            click.echo(f"{expert} expert mean p_lmc  {cells}  (Spearman {level_trend(rows, expert):+.2f})",
                       err=out is None)
    return 0


@cli.command()
@opt("--tests", default=",".join(TEST_NAMES), help="Comma-separated CI tests.")
@opt("--dims", default="0,1,2,3,4", help="Comma-separated conditioning-set sizes D.")
@opt("--samples", "-N", type=click.IntRange(min=4), default=200)
@opt("--reps", type=click.IntRange(min=1), default=1000)
@opt("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.05)
@opt("--seed", type=int, default=None)
@opt("--workers", type=click.IntRange(min=1), default=1)
@opt("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout when omitted).")
def type1(tests, dims, samples, reps, alpha, seed, workers, out):
    """False-positive rates of the CI tests as the conditioning set grows."""
    if seed is None:
        seed = secrets.randbits(63)
    names = [t.strip() for t in tests.split(",") if t.strip()]
    for t in names:
        if t not in TEST_NAMES:
            raise click.BadParameter(f"unknown test {t!r}", param_hint="--tests")
    D_values = [int(x) for x in dims.split(",") if x.strip()]
    rows = run_type1(names, D_values, samples, reps, alpha, seed, workers)
    _write_csv(rows, out)
    if out:
        _write_meta(out, _run_config("type1", tests=tests, dims=dims, samples=samples, reps=reps,
                                     alpha=alpha, seed=seed, out=out))
    return 0


def main(argv=None) -> int:
    """Entry point; returns (and exits with) the command's exit code."""
    try:
        code = cli.main(args=argv, prog_name="dagfalsify", standalone_mode=False)
    except click.exceptions.Exit as exc:
        code = exc.exit_code
    except click.ClickException as exc:
        exc.show()
        code = EXIT_INPUT_ERROR
    except click.Abort:
        click.echo("aborted", err=True)
        code = EXIT_INTERNAL_ERROR
    except (GraphError, ParseError, BindError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        code = EXIT_INPUT_ERROR
    except Exception as exc:  # noqa: BLE001 - report, never crash with exit code 1
        logger.exception("unexpected failure")
        click.echo(f"internal error: {exc}", err=True)
        code = EXIT_INTERNAL_ERROR
    code = 0 if code is None else int(code)
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
