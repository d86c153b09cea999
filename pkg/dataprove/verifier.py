"""
Verification pipeline: from a policy and an architecture to a conformance report.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import logging
from collections.abc import Callable

from pyee.base import EventEmitter

from .architecture import Architecture, check_well_formed_arch
from .definitions import Events, GoalKind, Outcome, default_max_crypto_depth
from .engine import EngineInputs, ProofEngine, ProofResult, relax_delay
from .goals import Goal, GoalSet, generate_goals
from .policy import Policy, check_well_formed_policy
from .report import ConformanceReport, classify_results

_LOG = logging.getLogger(__name__)


class Verifier:
    """
    Verifies an architecture against a policy.

    Emits ``Events.GOAL_VERIFIED`` with the goal and its proof result after
    each goal, ``Events.VIOLATION_FOUND`` with each violating verdict and
    ``Events.VERIFICATION_DONE`` with the finished report.
    """

    def __init__(
        self,
        policy: Policy,
        arch: Architecture,
        max_crypto_depth: int | None = None,
        max_steps: int | None = None,
        policy_name: str = "policy",
        arch_name: str = "architecture",
    ):
        """
        Create a verifier.

        :param policy: parsed policy
        :param arch: parsed architecture
        :param max_crypto_depth: crypto depth N; defaults to ``DPV_MAX_CRYPTO_DEPTH`` or 3
        :param max_steps: resolution-step ceiling of the proof engine
        :param policy_name: name of the policy in the report
        :param arch_name: name of the architecture in the report
        """
        self._policy = policy
        self._arch = arch
        self._max_crypto_depth = (
            default_max_crypto_depth() if max_crypto_depth is None else max_crypto_depth
        )
        self._inputs = EngineInputs.build(arch, policy, self._max_crypto_depth)
        self._engine = ProofEngine(self._inputs, max_steps)
        self._policy_name = policy_name
        self._arch_name = arch_name
        self._events = EventEmitter()

    @property
    def inputs(self) -> EngineInputs:
        """Engine inputs generated from the architecture and policy."""
        return self._inputs

    @property
    def engine(self) -> ProofEngine:
        """The proof engine shared by every goal of this verifier."""
        return self._engine

    def goals(self) -> GoalSet:
        """Generate the goal set, audit goals included."""
        return generate_goals(self._policy, arch=self._arch)

    def verify_goal(self, goal: Goal) -> ProofResult:
        """
        Prove a goal or any of its alternatives.

        Delay goals are proved with the policy delay replaced by a variable so
        the architecture delay can be compared afterwards.
        """
        candidates = list(goal.facts)
        if goal.kind in (GoalKind.HASUPTO, GoalKind.WITHIN):
            candidates[0] = relax_delay(candidates[0])
        steps = 0
        for candidate in candidates:
            result = self._engine.conformance_check(candidate)
            steps += result.steps
            if result.proved:
                return result
        return ProofResult(goal.fact, Outcome.NOT_PROVED, steps=steps)

    def run(self) -> ConformanceReport:
        """
        Run the whole verification.

        :return: the report, with policy conflicts, architecture violations and
                 parser warnings attached
        """
        conflicts = check_well_formed_policy(self._policy, self._arch)
        arch_violations = check_well_formed_arch(self._arch)
        goals = self.goals()
        _LOG.info("verifying %d goals with crypto depth %d", len(goals), self._max_crypto_depth)

        results: dict[Goal, ProofResult] = {}
        for goal in goals:
            result = self.verify_goal(goal)
            results[goal] = result
            self._events.emit(Events.GOAL_VERIFIED, goal, result)

        report = classify_results(
            goals,
            results,
            self._policy,
            self._arch,
            self._max_crypto_depth,
            self._policy_name,
            self._arch_name,
        )
        report = ConformanceReport(
            report.policy,
            report.architecture,
            report.max_crypto_depth,
            report.verdicts,
            report.notes,
            tuple(conflicts),
            tuple(arch_violations),
            self._arch.warnings,
        )
        for verdict in report.violations:
            self._events.emit(Events.VIOLATION_FOUND, verdict)
        self._events.emit(Events.VERIFICATION_DONE, report)
        _LOG.info("verification done: %s", report.summary)
        return report

    def add_listener(self, event: Events, f: Callable) -> None:
        """
        Call ``f`` whenever the verifier emits ``event``.

        :param event: pipeline event
        :param f: callback, called with the event arguments
        """
        self._events.add_listener(event, f)

    def listens_to(self, event: Events) -> Callable[[Callable], Callable]:
        """Decorator form of :meth:`add_listener`."""

        def on(f: Callable) -> Callable:
            self._events.add_listener(event, f)
            return f

        return on

    def remove_listener(self, event: Events, f: Callable) -> None:
        """Stop calling ``f`` on ``event``."""
        self._events.remove_listener(event, f)

    def remove_all_listeners(self, event: Events | None) -> None:
        """
        Drop the callbacks of ``event``, or of every event if ``event`` is ``None``.

        :param event: pipeline event or ``None``
        """
        self._events.remove_all_listeners(event)


def verify(
    policy: Policy,
    arch: Architecture,
    max_crypto_depth: int | None = None,
    **kwargs,
) -> ConformanceReport:
    """Verify an architecture against a policy and return the report."""
    return Verifier(policy, arch, max_crypto_depth, **kwargs).run()
