"""
Command line: ``kgbench [-v] [--log FILE] {mine,build,evaluate,stats,relabel} ...``

Exit code 0 on success and 1 on any error, including usage errors.
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from pydantic import BaseModel, ValidationError
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn

from kgbench.bench import build, dataset_statistics, load_bundle, statistics_table, write_bundle
from kgbench.errors import ConfigurationError, KgBenchError
from kgbench.evaluation import (
    EmptyPrecision,
    EvalConfig,
    evaluate_run,
    load_predictions,
    render_rule_types,
    render_summary,
    write_report,
)
from kgbench.graph import (
    LabelScheme,
    LabelVariant,
    load_graph,
    load_labels,
    load_mapping,
    relabel,
    write_graph,
    write_mapping,
)
from kgbench.llm import LLMConfig, LLMGenerator, TemplateGenerator, Transcript
from kgbench.logging import RunLog, configure
from kgbench.miner import mine
from kgbench.presets import PRESETS, preset
from kgbench.representation import config_header, prepr
from kgbench.rules import load_rules, write_rules
from kgbench.taxonomy import histogram_table, render_histogram, type_histogram
from kgbench.timer import Timer
from kgbench.verify import verify_bundle

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _override(model: BaseModel, **updates) -> BaseModel:
    """Copy of ``model`` with the non-``None`` updates applied, validated again."""
    updates = {k: v for k, v in updates.items() if v is not None}
    return type(model).model_validate({**model.model_dump(), **updates})


def _ratios(text: str) -> tuple[int, int, int]:
    try:
        a, b, c = (int(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three integers like 8:1:1, got {text!r}")
    return a, b, c


def _echo(config, args):
    if args.verbose:
        prepr(config, print_rich_theme="monokai")


def _spinner() -> Progress:
    # silent unless stderr is a terminal
    err = Console(stderr=True)
    return Progress(
        SpinnerColumn(),
        TextColumn("{task.description}"),
        console=err,
        transient=True,
        disable=not err.is_terminal,
    )


# Subcommands


def cmd_mine(args, console: Console) -> int:
    chosen = preset(args.preset)
    config = _override(
        chosen.miner,
        min_confidence=args.min_confidence,
        min_head_coverage=args.min_head_coverage,
        min_pca_confidence=args.min_pca_confidence,
        max_length=args.max_len,
        allow_instantiated_atoms=True if args.instantiated else None,
        workers=args.workers,
    )
    _echo(config, args)
    with open(args.graph, "rb") as f:
        graph = load_graph(f)

    with _spinner() as progress:
        task = progress.add_task("mining", total=None)

        def report(length, queued, accepted):
            progress.update(
                task, description=f"length {length} done: {queued} queued, {accepted} accepted"
            )

        with Timer("mine"):
            rules = mine(graph, config, progress=report)

    header = config_header(config, {"preset": chosen.name, "rules": len(rules)})
    with open(args.output, "w", encoding="utf-8", newline="\n") as f:
        write_rules(rules, f, graph, header=header)
    histogram = type_histogram(rules)
    if args.histogram:
        with open(args.histogram, "w", encoding="utf-8", newline="\n") as f:
            f.write(render_histogram(histogram, header=header))
    console.print(histogram_table(histogram, title=f"{len(rules)} rules"))
    return 0


def cmd_build(args, console: Console) -> int:
    chosen = preset(args.preset)
    base = chosen.build
    config = _override(
        base,
        plan=_override(base.plan, per_rule_limit=args.per_rule_limit, seed=args.plan_seed),
        balance=_override(base.balance, tau=args.tau, seed=args.balance_seed),
        split=_override(base.split, ratios=args.split, seed=args.split_seed),
        direction_seed=args.direction_seed,
        workers=args.workers,
    )
    scheme = _override(chosen.label_scheme, variant=args.label_scheme, seed=args.label_seed)
    _echo(config, args)

    if args.generator == "llm":
        llm_config = _override(LLMConfig(), model_name=args.model)
        generator = LLMGenerator(llm_config, Transcript(args.transcript))
        if not generator.ready:
            raise ConfigurationError(
                "--generator llm needs an endpoint (KGBENCH_LLM_API_KEY, OPENAI_API_KEY or "
                "KGBENCH_LLM_BASE_URL) or a non-empty --transcript"
            )
        generator_name = f"llm:{llm_config.model_name}"
    else:
        generator, generator_name = TemplateGenerator(), "template"

    with open(args.graph, "rb") as f:
        graph = load_graph(f)
    with open(args.rules, encoding="utf-8") as f:
        rules = load_rules(f, graph)
    logger.info("%d rules loaded", len(rules))
    names = None
    if args.names:
        with open(args.names, "rb") as f:
            names = load_labels(f)

    with _spinner() as progress, Timer("build"):
        task = progress.add_task("generating questions", total=None)
        bundle = build(
            graph,
            rules,
            config,
            generator,
            generator_name,
            chosen.name,
            scheme,
            names,
            progress=lambda: progress.advance(task),
        )
    write_bundle(bundle, args.output)
    console.print(statistics_table(dataset_statistics(bundle), chosen.name or ""))
    return 0


def cmd_evaluate(args, console: Console) -> int:
    bundle = load_bundle(args.bundle)
    questions = bundle.questions if args.split == "all" else bundle.splits[args.split]
    config = EvalConfig(split_on_space=args.split_on_space, empty_precision=args.empty_precision)
    _echo(config, args)
    mapping = None
    if args.mapping:
        with open(args.mapping, "rb") as f:
            mapping = load_mapping(f)
    with open(args.predictions, encoding="utf-8") as f:
        report = evaluate_run(
            questions, load_predictions(f), config, mapping, label_scheme=args.label_scheme
        )
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as f:
            write_report(report, f)
    console.print(render_summary(report))
    if args.breakdown == "rule-type":
        console.print(render_rule_types(report))
    return 0


def cmd_stats(args, console: Console) -> int:
    bundle = load_bundle(args.bundle)
    name = args.name if args.name is not None else bundle.manifest.preset or ""
    console.print(statistics_table(dataset_statistics(bundle), name))
    if not args.verify:
        return 0
    findings = verify_bundle(bundle)
    for finding in findings:
        print(f"{finding.question_id}: {finding.problem}", file=sys.stderr)
    if findings:
        print(f"error: {len(findings)} problems in {args.bundle}", file=sys.stderr)
        return 1
    console.print(f"all {len(bundle.questions)} questions verified")
    return 0


def cmd_relabel(args, console: Console) -> int:
    scheme = LabelScheme(variant=args.scheme, seed=args.seed)
    with open(args.graph, "rb") as f:
        graph = load_graph(f)
    names = None
    if args.names:
        with open(args.names, "rb") as f:
            names = load_labels(f)
    relabeled, mapping = relabel(graph, scheme, names)
    with open(args.output, "w", encoding="utf-8", newline="\n") as f:
        write_graph(relabeled, f)
    with open(args.mapping, "w", encoding="utf-8", newline="\n") as f:
        write_mapping(mapping, f)
    return 0


# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgbench", description="Rule-inferable KG question benchmarks.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--log", metavar="FILE", help="also append all output to FILE")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    presets = sorted(PRESETS)

    p = commands.add_parser("mine", help="mine Horn rules from a triple file")
    p.add_argument("graph")
    p.add_argument("--preset", choices=presets)
    p.add_argument("--min-confidence", type=float)
    p.add_argument("--min-head-coverage", type=float)
    p.add_argument("--min-pca-confidence", type=float)
    p.add_argument("--max-len", type=int)
    p.add_argument("--instantiated", action="store_true", help="also add atoms with constants")
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output", default="rules.tsv")
    p.add_argument("--histogram", metavar="FILE")
    p.set_defaults(handler=cmd_mine)

    p = commands.add_parser("build", help="build a benchmark bundle")
    p.add_argument("graph")
    p.add_argument("rules")
    p.add_argument("-o", "--output", required=True, help="bundle directory")
    p.add_argument("--preset", choices=presets)
    p.add_argument("--per-rule-limit", type=int)
    p.add_argument("--plan-seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--balance-seed", type=int)
    p.add_argument("--split", type=_ratios, metavar="A:B:C")
    p.add_argument("--split-seed", type=int)
    p.add_argument("--direction-seed", type=int)
    p.add_argument("--generator", choices=("template", "llm"), default="template")
    p.add_argument("--model", help="chat model name for --generator llm")
    p.add_argument("--transcript", metavar="FILE", help="completion cache, read and appended")
    p.add_argument("--label-scheme", type=LabelVariant, choices=list(LabelVariant))
    p.add_argument("--label-seed", type=int)
    p.add_argument("--names", metavar="FILE", help="label<TAB>text file for text-label")
    p.add_argument("--workers", type=int, help="questions generated concurrently")
    p.set_defaults(handler=cmd_build)

    p = commands.add_parser("evaluate", help="score a run against a bundle")
    p.add_argument("bundle")
    p.add_argument("predictions", help="question_id<TAB>raw answer rows")
    p.add_argument("--split", choices=("train", "validation", "test", "all"), default="test")
    p.add_argument("--split-on-space", action="store_true")
    p.add_argument(
        "--empty-precision", type=EmptyPrecision, choices=list(EmptyPrecision), default="zero"
    )
    p.add_argument("--mapping", metavar="FILE", help="label mapping written by relabel")
    p.add_argument("--label-scheme", choices=[v.value for v in LabelVariant])
    p.add_argument("--breakdown", choices=("none", "rule-type"), default="none")
    p.add_argument("-o", "--output", metavar="FILE", help="JSON report")
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser("stats", help="dataset statistics of a bundle")
    p.add_argument("bundle")
    p.add_argument("--name", help="row label; the preset name by default")
    p.add_argument("--verify", action="store_true", help="re-derive every removed triple")
    p.set_defaults(handler=cmd_stats)

    p = commands.add_parser("relabel", help="re-render entity labels")
    p.add_argument("graph")
    p.add_argument("--scheme", type=LabelVariant, choices=list(LabelVariant), required=True)
    p.add_argument("--names", metavar="FILE", help="label<TAB>text file for text-label")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mapping", required=True, metavar="FILE")
    p.set_defaults(handler=cmd_relabel)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure(args.verbose)
    console = Console()
    try:
        if args.log:
            with RunLog(args.log):
                return args.handler(args, console)
        return args.handler(args, console)
    except (KgBenchError, ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
