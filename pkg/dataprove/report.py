"""
Conformance classification and report rendering.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

from .architecture import Architecture, ArchViolation
from .definitions import (
    SERVICE_PROVIDER,
    STORAGE_PLACES,
    Classification,
    GoalKind,
    Outcome,
    Polarity,
    Predicate,
    ReportFormat,
    SubPolicy,
)
from .engine import ARCH_DELAY, Derivation, ProofResult
from .errors import InputError, InternalError
from .goals import Goal, GoalSet
from .policy import Conflict, Policy
from .terms import Fact, TimeValue, walk

_LOG = logging.getLogger(__name__)

_CONSENTS = {
    GoalKind.CCONS: ("collection", "is collected"),
    GoalKind.UCONS: ("usage", "is used"),
    GoalKind.SCONS: ("storage", "is stored"),
    GoalKind.FWCONS: ("forwarding", "is forwarded"),
}
_PURPOSES = (GoalKind.CPURP, GoalKind.UPURP, GoalKind.FWPURP)

FUNCTIONAL = "functional"
PRIVACY = "privacy"
DPR = "dpr"
GROUPS = (FUNCTIONAL, PRIVACY, DPR)


@dataclass(frozen=True)
class Verdict:
    """Classified outcome of one goal."""

    goal: Fact
    data_type: str
    kind: GoalKind
    sub_policy: SubPolicy
    polarity: Polarity
    outcome: Outcome
    classification: Classification
    detail: str
    derivation: Derivation | None = None
    via_access_fallback: str | None = None

    @property
    def group(self) -> str:
        """Conformance kind: functional, privacy or dpr."""
        return self.classification.value.split("-", 1)[0]

    def to_dict(self) -> dict[str, Any]:
        """Plain-data form used by the structured report."""
        data: dict[str, Any] = {
            "goal": str(self.goal),
            "dataType": self.data_type,
            "subPolicy": self.sub_policy.value,
            "polarity": self.polarity.value,
            "outcome": self.outcome.value,
            "classification": self.classification.value,
            "detail": self.detail,
        }
        if self.via_access_fallback is not None:
            data["viaAccessTo"] = self.via_access_fallback
        if self.derivation is not None:
            data["derivation"] = self.derivation.to_dict()
        return data


@dataclass(frozen=True)
class ConformanceReport:
    """Verdicts of one verification run, with everything found on the way."""

    policy: str
    architecture: str
    max_crypto_depth: int
    verdicts: tuple[Verdict, ...] = ()
    notes: tuple[str, ...] = ()
    conflicts: tuple[Conflict, ...] = ()
    arch_violations: tuple[ArchViolation, ...] = ()
    warnings: tuple[str, ...] = ()

    def grouped(self) -> dict[str, list[Verdict]]:
        """Verdicts by conformance kind, each in goal order."""
        groups: dict[str, list[Verdict]] = {g: [] for g in GROUPS}
        for verdict in self.verdicts:
            groups[verdict.group].append(verdict)
        return groups

    @property
    def violations(self) -> list[Verdict]:
        """Verdicts classified as violations."""
        return [v for v in self.verdicts if v.classification.is_violation]

    @property
    def summary(self) -> dict[str, int]:
        """Violation counts per conformance kind."""
        counts = {g: 0 for g in GROUPS}
        for verdict in self.violations:
            counts[verdict.group] += 1
        return {
            "functionalViolations": counts[FUNCTIONAL],
            "privacyViolations": counts[PRIVACY],
            "dprViolations": counts[DPR],
        }


def arch_delay(result: ProofResult) -> TimeValue | None:
    """Longest architecture delay bound by any solution of a relaxed delay goal."""
    delays = []
    for solution in result.solutions:
        value = walk(solution.substitution.get(ARCH_DELAY), solution.substitution)
        if isinstance(value, TimeValue):
            delays.append(value)
    return max(delays, key=lambda d: d.minutes, default=None)


def _exceeds(actual: TimeValue | None, allowed: object) -> bool:
    # a non-specific policy delay has no bound
    if actual is None or not isinstance(allowed, TimeValue):
        return False
    return actual.minutes > allowed.minutes


def _owners(place: str, arch: Architecture | None) -> str:
    if arch is not None:
        owners = arch.owners_of(place)
    else:
        owners = [SERVICE_PROVIDER] if place in STORAGE_PLACES else []
    return ", ".join(owners or [place])


def _args(goal: Goal) -> list[str]:
    return [str(a) for a in goal.fact.args]


def _possession(goal: Goal, proved: bool, policy: Policy) -> tuple[Classification, str]:
    args = _args(goal)
    entity, theta = args[0], args[1]
    if goal.fact.predicate == Predicate.HAS.value:
        action = f"have {theta}"
    else:
        verb = "uniquely link" if goal.fact.predicate == Predicate.LINKUNIQUE.value else "link"
        action = f"{verb} {theta} and {args[2]}"
    if goal.polarity is Polarity.PROVABLE:
        if proved:
            return Classification.FUNCTIONAL_CONFORM, f"{entity} can {action} as permitted"
        return (
            Classification.FUNCTIONAL_VIOLATION,
            f"{entity} is permitted to {action} but the architecture does not allow it",
        )
    bundle = policy.bundles.get(goal.data_type)
    stance = "forbidden"
    if goal.kind is GoalKind.LINK and bundle is not None:
        listed = {f.other_type for f in bundle.link_forbid if f.entity == entity}
        stance = "forbidden" if args[2] in listed else "not permitted"
    if proved:
        return Classification.PRIVACY_VIOLATION, f"{entity} can {action}, which is {stance}"
    return Classification.PRIVACY_CONFORM, f"{entity} cannot {action}"


def _retention(
    goal: Goal, result: ProofResult, arch: Architecture | None
) -> tuple[Classification, str]:
    place, theta = _args(goal)[:2]
    delay = arch_delay(result)
    if goal.polarity is Polarity.PROVABLE:
        if result.proved:
            return Classification.FUNCTIONAL_CONFORM, f"{place} can keep {theta} up to {delay}"
        return Classification.FUNCTIONAL_VIOLATION, f"{place} never keeps {theta} for a bounded time"
    if result.proved and _exceeds(delay, goal.policy_delay):
        owners = _owners(place, arch)
        return (
            Classification.PRIVACY_VIOLATION,
            f"{owners} can have {theta} after {goal.policy_delay}: "
            f"{place} keeps it up to {delay}",
        )
    return Classification.PRIVACY_CONFORM, f"{theta} is not kept at {place} beyond {goal.policy_delay}"


def _consent(goal: Goal, proved: bool) -> tuple[Classification, str]:
    theta = goal.data_type
    name, happens = _CONSENTS[goal.kind]
    if goal.kind is GoalKind.FWCONS:
        target = goal.fact.args[2] if not goal.audit else goal.fact.args[1].args[1]
        happens = f"{happens} to {target}"
    if goal.audit:
        if proved:
            return (
                Classification.FUNCTIONAL_VIOLATION,
                f"sp collects {name} consent for {theta} although the policy does not require it",
            )
        return Classification.FUNCTIONAL_CONFORM, f"sp does not collect {name} consent for {theta}"
    if proved:
        return Classification.DPR_CONFORM, f"sp collects {name} consent before {theta} {happens}"
    return (
        Classification.DPR_VIOLATION,
        f"sp does not collect {name} consent before {theta} {happens}",
    )


def _purpose(goal: Goal, proved: bool) -> tuple[Classification, str]:
    produced, act = _args(goal)
    if goal.audit:
        if proved:
            return (
                Classification.DPR_VIOLATION,
                f"{produced} is made by {act}, a purpose the policy does not list for {goal.data_type}",
            )
        return Classification.DPR_CONFORM, f"{produced} is not made by {act}"
    if proved:
        return Classification.FUNCTIONAL_CONFORM, f"purpose {act}:{produced} is served"
    return Classification.FUNCTIONAL_VIOLATION, f"purpose {act}:{produced} is never served"


def _placement(goal: Goal, proved: bool) -> tuple[Classification, str]:
    entity, theta = _args(goal)[:2]
    if goal.kind is GoalKind.PLACES:
        happened, absent, outside = (
            f"{theta} can be stored at {entity}",
            f"{theta} is never stored at {entity}",
            "outside the storage places of the policy",
        )
    else:
        happened, absent, outside = (
            f"{theta} can be forwarded to {entity}",
            f"{theta} is never forwarded to {entity}",
            "which is not a recipient in the policy",
        )
    if goal.audit:
        if proved:
            return Classification.DPR_VIOLATION, f"{happened}, {outside}"
        return Classification.DPR_CONFORM, absent
    if proved:
        return Classification.FUNCTIONAL_CONFORM, happened
    return Classification.FUNCTIONAL_VIOLATION, absent


def _deletion(goal: Goal, result: ProofResult) -> tuple[Classification, str]:
    place, theta = _args(goal)[:2]
    if not result.proved:
        return Classification.FUNCTIONAL_VIOLATION, f"{theta} is never deleted from {place}"
    delay = arch_delay(result)
    if delay is None:
        return Classification.FUNCTIONAL_CONFORM, f"{theta} can be deleted from {place}"
    if _exceeds(delay, goal.policy_delay):
        return (
            Classification.DPR_VIOLATION,
            f"{theta} is deleted from {place} within {delay}, "
            f"longer than the {goal.policy_delay} of the policy",
        )
    return Classification.FUNCTIONAL_CONFORM, f"{theta} is deleted from {place} within {delay}"


def classify(
    goal: Goal,
    result: ProofResult,
    policy: Policy,
    arch: Architecture | None = None,
) -> Verdict:
    """
    Classify the proof outcome of one goal.

    :param goal: generated goal
    :param result: proof result of the goal
    :param policy: policy the goal was generated from
    :param arch: architecture, used to name the owners of storage places
    """
    proved = result.proved
    if goal.kind in (GoalKind.HAS, GoalKind.LINK):
        classification, detail = _possession(goal, proved, policy)
    elif goal.kind is GoalKind.HASUPTO:
        classification, detail = _retention(goal, result, arch)
    elif goal.kind in _CONSENTS:
        classification, detail = _consent(goal, proved)
    elif goal.kind in _PURPOSES:
        classification, detail = _purpose(goal, proved)
    elif goal.kind in (GoalKind.PLACES, GoalKind.FWTO):
        classification, detail = _placement(goal, proved)
    else:
        classification, detail = _deletion(goal, result)
    if result.via_access_fallback is not None:
        detail += f" (through {result.via_access_fallback})"
    return Verdict(
        goal.fact,
        goal.data_type,
        goal.kind,
        goal.sub_policy,
        goal.polarity,
        result.outcome,
        classification,
        detail,
        result.derivation,
        result.via_access_fallback,
    )


def classify_results(
    goals: GoalSet,
    results: Mapping[Goal, ProofResult],
    policy: Policy,
    arch: Architecture | None = None,
    max_crypto_depth: int = 3,
    policy_name: str = "policy",
    arch_name: str = "architecture",
) -> ConformanceReport:
    """
    Build the conformance report of a verification run.

    :param goals: generated goals; every one must have a result
    :param results: proof result per goal
    :param policy: the verified policy
    :param arch: the verified architecture
    :param max_crypto_depth: crypto depth the goals were proved with
    :raises InternalError: if a goal has no result.
    """
    verdicts = []
    for goal in goals:
        result = results.get(goal)
        if result is None:
            raise InternalError(f"no proof result for goal {goal}")
        verdicts.append(classify(goal, result, policy, arch))
    report = ConformanceReport(
        policy_name,
        arch_name,
        max_crypto_depth,
        tuple(verdicts),
        notes=goals.notes,
    )
    _LOG.debug("classified %d goals: %s", len(verdicts), report.summary)
    return report


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_HEADINGS = {
    FUNCTIONAL: "Functional conformance",
    PRIVACY: "Privacy conformance",
    DPR: "DPR conformance",
}


def _summary_line(report: ConformanceReport) -> str:
    summary = report.summary
    total = sum(summary.values())
    noun = "violation" if total == 1 else "violations"
    return (
        f"{total} {noun} ({summary['functionalViolations']} functional, "
        f"{summary['privacyViolations']} privacy, {summary['dprViolations']} dpr)"
    )


def _render_text(report: ConformanceReport, with_derivations: bool) -> str:
    lines = [
        f"policy: {report.policy}",
        f"architecture: {report.architecture}",
        f"max crypto depth: {report.max_crypto_depth} "
        f"(unproved goals are unprovable up to {report.max_crypto_depth} nested crypto layers)",
    ]
    for group, verdicts in report.grouped().items():
        if not verdicts:
            continue
        lines += ["", _HEADINGS[group]]
        for verdict in verdicts:
            lines.append(f"  [{verdict.classification.value}] {verdict.goal}: {verdict.detail}")
            if verdict.derivation is not None:
                if with_derivations:
                    lines += ["      " + line for line in verdict.derivation.render()]
                else:
                    rules = verdict.derivation.rules_used()
                    leaf = next(verdict.derivation.leaves()).source
                    lines.append(f"      proof: {' > '.join(rules) if rules else leaf}")
    for title, items in (
        ("Notes", report.notes),
        ("Policy conflicts", report.conflicts),
        ("Architecture violations", report.arch_violations),
        ("Warnings", report.warnings),
    ):
        if items:
            lines += ["", title] + [f"  - {item}" for item in items]
    lines += ["", _summary_line(report)]
    return "\n".join(lines) + "\n"


def report_to_dict(report: ConformanceReport) -> dict[str, Any]:
    """Structured form of a report with stable field names."""
    return {
        "policy": report.policy,
        "architecture": report.architecture,
        "maxCryptoDepth": report.max_crypto_depth,
        "verdicts": [v.to_dict() for v in report.verdicts],
        "summary": report.summary,
        "notes": list(report.notes),
        "conflicts": [str(c) for c in report.conflicts],
        "architectureViolations": [str(v) for v in report.arch_violations],
        "warnings": list(report.warnings),
    }


def render_report(
    report: ConformanceReport,
    fmt: ReportFormat | str = ReportFormat.TEXT,
    with_derivations: bool = False,
) -> str:
    """
    Render a report.

    :param report: report to render
    :param fmt: ``text`` or ``json``
    :param with_derivations: print full proof trees in text reports
    :raises InputError: on an unknown format.
    """
    try:
        fmt = ReportFormat(fmt)
    except ValueError as ex:
        raise InputError(f"unknown report format: {fmt}") from ex
    if fmt is ReportFormat.JSON:
        return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"
    return _render_text(report, with_derivations)


_VERDICT_FIELDS = {
    "goal": str,
    "dataType": str,
    "subPolicy": str,
    "polarity": str,
    "outcome": str,
    "classification": str,
    "detail": str,
}


def load_report(text: str) -> dict[str, Any]:
    """
    Parse and validate a structured report.

    :raises InputError: if the document does not follow the report schema.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as ex:
        raise InputError(f"report is not valid JSON: {ex}") from ex
    if not isinstance(data, dict):
        raise InputError("report must be a JSON object")
    for key, kind in (
        ("policy", str),
        ("architecture", str),
        ("maxCryptoDepth", int),
        ("verdicts", list),
        ("summary", dict),
    ):
        if not isinstance(data.get(key), kind):
            raise InputError(f"report field '{key}' is missing or not a {kind.__name__}")
    for index, verdict in enumerate(data["verdicts"]):
        for key, kind in _VERDICT_FIELDS.items():
            if not isinstance(verdict.get(key), kind):
                raise InputError(f"verdict {index}: field '{key}' is missing")
        try:
            Classification(verdict["classification"])
            Polarity(verdict["polarity"])
            Outcome(verdict["outcome"])
        except ValueError as ex:
            raise InputError(f"verdict {index}: {ex}") from ex
    for key in ("functionalViolations", "privacyViolations", "dprViolations"):
        if not isinstance(data["summary"].get(key), int):
            raise InputError(f"summary field '{key}' is missing")
    return data

