#!/usr/bin/env python3
"""
Automated conformance verification of system architectures against data protection policies.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

# Set default logging handler to avoid "No handler found" warnings.
import logging  # isort:skip

from .definitions import (  # isort:skip # noqa: F401
    Classification,
    ComplianceRule,
    Events,
    GoalKind,
    Outcome,
    Polarity,
    ReportFormat,
    SubPolicy,
)
from .errors import (  # isort:skip # noqa: F401
    ArchitectureSyntaxError,
    DataproveError,
    InputError,
    InternalError,
    PolicyReferenceError,
    PolicySyntaxError,
    ResolutionLimitError,
    TraceSyntaxError,
)
from .terms import Fact, fact, unify  # isort:skip # noqa: F401
from .policy import Policy, check_well_formed_policy, parse_policy  # isort:skip # noqa: F401
from .architecture import (  # isort:skip # noqa: F401
    Architecture,
    check_well_formed_arch,
    parse_architecture,
)
from .engine import EngineInputs, ProofEngine, ProofResult, conformance_check  # noqa: F401
from .goals import Goal, GoalSet, generate_goals  # noqa: F401
from .report import ConformanceReport, render_report  # noqa: F401
from .trace import (  # noqa: F401
    check_trace_compliance,
    parse_trace,
    run_trace,
)
from .verifier import Verifier, verify  # noqa: F401

try:
    from ._version import version as __version__
    from ._version import version_tuple
except ImportError:
    __version__ = "unknown version"
    version_tuple = (0, 0, "unknown version")

logging.getLogger(__name__).addHandler(logging.NullHandler())
