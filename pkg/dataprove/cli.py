"""
Command line interface.

Exit status: 0 when nothing was found, 2 when violations or conflicts were
found, 1 on input errors.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import click

from .architecture import Architecture, check_well_formed_arch, parse_architecture
from .definitions import ReportFormat, RuleSet
from .errors import DataproveError
from .facts import generate_purpose_facts, generate_trivial_facts, generate_unique_facts
from .goals import generate_goals
from .policy import Policy, check_well_formed_policy, parse_policy
from .report import render_report
from .rules import build_rulesets
from .trace import check_trace_compliance, parse_trace, run_trace
from .verifier import Verifier

_LOG = logging.getLogger(__name__)

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_FINDINGS = 2

_INPUT = click.Path(exists=True, dir_okay=False, path_type=Path)
_OUTPUT = click.Path(dir_okay=False, writable=True, path_type=Path)
_FORMATS = click.Choice([f.value for f in ReportFormat])


def _read_policy(path: Path) -> Policy:
    return parse_policy(path.read_text(encoding="utf-8"))


def _read_arch(path: Path, max_nesting: int | None) -> Architecture:
    return parse_architecture(path.read_text(encoding="utf-8"), max_nesting)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        out.write_text(text, encoding="utf-8")
        _LOG.info("written to %s", out)


def _listing(title: str, items: Sequence[object]) -> list[str]:
    return [f"{title} ({len(items)}):"] + [f"  {item}" for item in items]


policy_option = click.option("--policy", "policy_path", type=_INPUT, required=True,
                             help="Policy file.")
arch_option = click.option("--arch", "arch_path", type=_INPUT, required=True,
                           help="Architecture file.")
nesting_option = click.option("--max-nesting", type=click.IntRange(min=0), default=None,
                              help="Compound nesting bound (default: DPV_MAX_NESTING or 3).")
format_option = click.option("--format", "fmt", type=_FORMATS, default=ReportFormat.TEXT.value,
                             show_default=True, help="Report format.")
out_option = click.option("--out", type=_OUTPUT, default=None,
                          help="Write the output to a file instead of stdout.")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log debug output to stderr.")
def cli(verbose: bool) -> None:
    """Verify system architectures against data protection policies."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@cli.command()
@policy_option
@arch_option
@click.option("--max-crypto-depth", type=click.IntRange(min=0), default=None,
              help="Crypto depth N (default: DPV_MAX_CRYPTO_DEPTH or 3).")
@nesting_option
@format_option
@out_option
@click.option("--derivations", is_flag=True, help="Print full proof trees in text reports.")
def verify(policy_path: Path, arch_path: Path, max_crypto_depth: int | None,
           max_nesting: int | None, fmt: str, out: Path | None, derivations: bool) -> int:
    """Verify an architecture against a policy."""
    policy = _read_policy(policy_path)
    arch = _read_arch(arch_path, max_nesting)
    verifier = Verifier(
        policy,
        arch,
        max_crypto_depth,
        policy_name=policy_path.name,
        arch_name=arch_path.name,
    )
    report = verifier.run()
    _emit(render_report(report, fmt, derivations), out)
    return EXIT_FINDINGS if report.violations else EXIT_CLEAN


@cli.command("lint-policy")
@policy_option
@click.option("--arch", "arch_path", type=_INPUT, default=None,
              help="Architecture whose HASACCESSTO lines are checked against the policy.")
def lint_policy(policy_path: Path, arch_path: Path | None) -> int:
    """Parse a policy and report conflicting sub-policies."""
    arch = _read_arch(arch_path, None) if arch_path is not None else None
    conflicts = check_well_formed_policy(_read_policy(policy_path), arch)
    if not conflicts:
        click.echo(f"{policy_path.name}: no conflicts")
        return EXIT_CLEAN
    click.echo("\n".join(_listing(f"{policy_path.name}: conflicts", conflicts)))
    return EXIT_FINDINGS


@cli.command("lint-arch")
@arch_option
@nesting_option
def lint_arch(arch_path: Path, max_nesting: int | None) -> int:
    """Parse an architecture and report actions that are not well-formed."""
    arch = _read_arch(arch_path, max_nesting)
    violations = check_well_formed_arch(arch)
    lines = []
    if violations:
        lines += _listing(f"{arch_path.name}: violations", violations)
    if arch.warnings:
        lines += _listing(f"{arch_path.name}: warnings", arch.warnings)
    click.echo("\n".join(lines) if lines else f"{arch_path.name}: well-formed")
    return EXIT_FINDINGS if violations else EXIT_CLEAN


@cli.command()
@arch_option
@click.option("--policy", "policy_path", type=_INPUT, default=None,
              help="Policy file, for the unique facts.")
@nesting_option
def facts(arch_path: Path, policy_path: Path | None, max_nesting: int | None) -> int:
    """Print the facts generated from an architecture."""
    arch = _read_arch(arch_path, max_nesting)
    lines = _listing("trivial facts", generate_trivial_facts(arch))
    lines += _listing("purpose facts", generate_purpose_facts(arch).all())
    if policy_path is not None:
        lines += _listing("unique facts", generate_unique_facts(_read_policy(policy_path)))
    click.echo("\n".join(lines))
    return EXIT_CLEAN


@cli.command()
@policy_option
@click.option("--arch", "arch_path", type=_INPUT, default=None,
              help="Architecture file, for the audit goals.")
@nesting_option
def goals(policy_path: Path, arch_path: Path | None, max_nesting: int | None) -> int:
    """Print the goals generated from a policy."""
    arch = _read_arch(arch_path, max_nesting) if arch_path is not None else None
    goal_set = generate_goals(_read_policy(policy_path), arch=arch)
    lines = _listing("goals", goal_set.goals)
    if goal_set.notes:
        lines += _listing("notes", goal_set.notes)
    click.echo("\n".join(lines))
    return EXIT_CLEAN


@cli.command()
@click.option("--set", "rule_set", type=click.Choice([s.value for s in RuleSet]), default=None,
              help="Only print one rule set.")
def rules(rule_set: str | None) -> int:
    """Print the inference rule catalog."""
    rulesets = build_rulesets()
    lines = []
    for name in RuleSet:
        if rule_set is not None and name.value != rule_set:
            continue
        lines += _listing(name.value, rulesets.named(name))
    click.echo("\n".join(lines))
    return EXIT_CLEAN


@cli.command("trace-check")
@policy_option
@click.option("--trace", "trace_path", type=_INPUT, required=True, help="Trace file.")
@format_option
@out_option
@click.option("--state", is_flag=True, help="Also print the data state after the trace.")
def trace_check(policy_path: Path, trace_path: Path, fmt: str, out: Path | None,
                state: bool) -> int:
    """Check a service trace against a policy."""
    policy = _read_policy(policy_path)
    trace = parse_trace(trace_path.read_text(encoding="utf-8"))
    violations = check_trace_compliance(trace, policy)
    final = run_trace(trace) if state else None

    if ReportFormat(fmt) is ReportFormat.JSON:
        document = {
            "policy": policy_path.name,
            "trace": trace_path.name,
            "events": len(trace),
            "violations": [v.to_dict() for v in violations],
        }
        if final is not None:
            document["state"] = final.render().splitlines()
        text = json.dumps(document, indent=2, ensure_ascii=False) + "\n"
    else:
        lines = [f"Trace {trace_path.name} against {policy_path.name}: {len(trace)} events"]
        for violation in violations:
            lines.append(f"  {violation}")
            lines += [f"      line {e.line}: {e}" for e in violation.events]
        if final is not None:
            lines += ["", "Data state:"] + [f"  {s}" for s in final.render().splitlines()]
        lines += ["", f"{len(violations)} violation(s)"]
        text = "\n".join(lines) + "\n"
    _emit(text, out)
    return EXIT_FINDINGS if violations else EXIT_CLEAN


def run_cli(argv: Sequence[str] | None = None) -> int:
    """
    Run the command line interface.

    :param argv: arguments without the program name; ``sys.argv`` by default
    :return: exit status
    """
    try:
        status = cli.main(
            args=list(argv) if argv is not None else None,
            prog_name="dataprove",
            standalone_mode=False,
        )
    except click.ClickException as ex:
        ex.show()
        return EXIT_ERROR
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_ERROR
    except DataproveError as ex:
        click.echo(f"error: {ex}", err=True)
        return EXIT_ERROR
    except OSError as ex:
        click.echo(f"error: {ex}", err=True)
        return EXIT_ERROR
    return status if isinstance(status, int) else EXIT_CLEAN


def main() -> None:
    """Console script entry point."""
    sys.exit(run_cli())
