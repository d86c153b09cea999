"""
Shared definitions: enums, reserved keywords and configuration defaults.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import os
from enum import Enum

from .errors import InputError

# Reserved entity keywords of the architecture and policy languages
SERVICE_PROVIDER = "sp"
TRUSTED = "trusted"
MAIN_STORAGE = "mainstorage"
BACKUP_STORAGE = "backupstorage"
STORAGE_PLACES = (MAIN_STORAGE, BACKUP_STORAGE)
RESERVED_ENTITIES = (SERVICE_PROVIDER, TRUSTED, MAIN_STORAGE, BACKUP_STORAGE)
DATA_SUBJECT = "ds"
NON_SPECIFIC_TIME = "t"
ANONYMOUS = "_"

DEFAULT_MAX_CRYPTO_DEPTH = 3
DEFAULT_MAX_NESTING = 3

ENV_MAX_CRYPTO_DEPTH = "DPV_MAX_CRYPTO_DEPTH"
ENV_MAX_NESTING = "DPV_MAX_NESTING"


class VarKind(str, Enum):
    """Kinds of logic variables, restricting what they may bind to."""

    DATA = "data"
    ENTITY = "entity"
    TIME = "time"
    DELAY = "delay"
    KEY = "key"
    FUNCTOR = "functor"


class CryptoKind(str, Enum):
    """Cryptographic constructors."""

    SENC = "Senc"
    AENC = "Aenc"
    MAC = "Mac"
    HASH = "Hash"
    SK = "Sk"

    @property
    def arity(self) -> int:
        """Number of arguments the constructor takes."""
        return 2 if self in (CryptoKind.SENC, CryptoKind.AENC, CryptoKind.MAC) else 1

    @property
    def is_layer(self) -> bool:
        """Whether the constructor counts as a layer of nested crypto."""
        return self is not CryptoKind.SK


class SpecialKind(str, Enum):
    """Special function constructors."""

    TIME = "Time"
    P = "P"
    META = "Meta"
    CCONSENT = "Cconsent"
    UCONSENT = "Uconsent"
    SCONSENT = "Sconsent"
    FWCONSENT = "Fwconsent"

    @property
    def arity(self) -> int:
        """Number of arguments the constructor takes."""
        return 2 if self is SpecialKind.FWCONSENT else 1

    @property
    def is_consent(self) -> bool:
        """Whether the constructor wraps a consent."""
        return self in CONSENT_KINDS


CONSENT_KINDS = (
    SpecialKind.CCONSENT,
    SpecialKind.UCONSENT,
    SpecialKind.SCONSENT,
    SpecialKind.FWCONSENT,
)


class TimeUnit(str, Enum):
    """Units of the tvalue grammar."""

    YEAR = "y"
    MONTH = "mo"
    WEEK = "w"
    DAY = "d"
    HOUR = "h"
    MINUTE = "m"

    @property
    def minutes(self) -> int:
        """Length of the unit in minutes (365-day year, 30-day month)."""
        return _UNIT_MINUTES[self]


_UNIT_MINUTES = {
    TimeUnit.YEAR: 525600,
    TimeUnit.MONTH: 43200,
    TimeUnit.WEEK: 10080,
    TimeUnit.DAY: 1440,
    TimeUnit.HOUR: 60,
    TimeUnit.MINUTE: 1,
}


class ActionKind(str, Enum):
    """Architecture action keywords."""

    OWN = "OWN"
    RECEIVE = "RECEIVE"
    RECEIVEAT = "RECEIVEAT"
    CREATE = "CREATE"
    CREATEAT = "CREATEAT"
    CALCULATE = "CALCULATE"
    CALCULATEAT = "CALCULATEAT"
    STORE = "STORE"
    STOREAT = "STOREAT"
    DELETE = "DELETE"
    DELETEWITHIN = "DELETEWITHIN"

    @property
    def is_timed(self) -> bool:
        """Whether the action carries a Time() argument."""
        return self in (
            ActionKind.RECEIVEAT,
            ActionKind.CREATEAT,
            ActionKind.CALCULATEAT,
            ActionKind.STOREAT,
            ActionKind.DELETEWITHIN,
        )

    @property
    def has_origin(self) -> bool:
        """Whether the action records the entity the data originates from."""
        return self in (
            ActionKind.RECEIVE,
            ActionKind.RECEIVEAT,
            ActionKind.STORE,
            ActionKind.STOREAT,
            ActionKind.DELETE,
            ActionKind.DELETEWITHIN,
        )

    @property
    def is_source(self) -> bool:
        """Whether the action brings data into an entity."""
        return self in SOURCE_ACTIONS


SOURCE_ACTIONS = (
    ActionKind.OWN,
    ActionKind.RECEIVE,
    ActionKind.RECEIVEAT,
    ActionKind.CREATE,
    ActionKind.CREATEAT,
    ActionKind.CALCULATE,
    ActionKind.CALCULATEAT,
)


class Predicate(str, Enum):
    """Non-action predicates known to the engine."""

    HAS = "HAS"
    HASUPTO = "HASUPTO"
    CRYPTHAS = "CRYPTHAS"
    LINK = "LINK"
    LINKUNIQUE = "LINKUNIQUE"
    UNIQUE = "UNIQUE"
    CCONSENTCOLLECTED = "CCONSENTCOLLECTED"
    UCONSENTCOLLECTED = "UCONSENTCOLLECTED"
    STRCONSENTCOLLECTED = "STRCONSENTCOLLECTED"
    FWCONSENTCOLLECTED = "FWCONSENTCOLLECTED"
    CPURPOSE = "CPURPOSE"
    UPURPOSE = "UPURPOSE"
    FWPURPOSE = "FWPURPOSE"


PURPOSE_PREDICATES = (Predicate.CPURPOSE, Predicate.UPURPOSE, Predicate.FWPURPOSE)


class RuleSet(str, Enum):
    """Inference rule sets, keyed by the predicates of their heads."""

    DPR = "DPRRules"
    HAS_UP_TO = "HasUpToRules"
    HAS = "HasRules"
    CRYPT_HAS = "CryptHasRules"
    LINK = "LinkRules"
    LINK_UNIQUE = "LinkUniqueRules"
    TRIVIAL = "TrivialRules"


class SubPolicy(str, Enum):
    """The seven sub-policies of a data-type policy bundle."""

    COLLECTION = "collection"
    USAGE = "usage"
    STORAGE = "storage"
    DELETION = "deletion"
    TRANSFER = "transfer"
    HAS = "has"
    LINK = "link"


class PolicyEventKind(str, Enum):
    """Events of a service run, as seen by the policy."""

    CCONSENTAT = "cconsentat"
    COLLECTAT = "collectat"
    UCONSENTAT = "uconsentat"
    CREATEAT = "createat"
    CALCULATEAT = "calculateat"
    SCONSENTAT = "sconsentat"
    STOREAT = "storeat"
    DELETEAT = "deleteat"
    FWCONSENTAT = "fwconsentat"
    FORWARDAT = "forwardat"

    @property
    def is_use(self) -> bool:
        """Whether the event is a service-specific use of data."""
        return self in (PolicyEventKind.CREATEAT, PolicyEventKind.CALCULATEAT)

    @property
    def consent(self) -> SpecialKind | None:
        """Consent constructor recorded by the event, if it is a consent event."""
        return _EVENT_CONSENTS.get(self)


_EVENT_CONSENTS = {
    PolicyEventKind.CCONSENTAT: SpecialKind.CCONSENT,
    PolicyEventKind.UCONSENTAT: SpecialKind.UCONSENT,
    PolicyEventKind.SCONSENTAT: SpecialKind.SCONSENT,
    PolicyEventKind.FWCONSENTAT: SpecialKind.FWCONSENT,
}


class ArchEventKind(str, Enum):
    """Events of an architecture run."""

    OWN = "own"
    CALCULATEAT = "calculateat"
    CREATEAT = "createat"
    RECEIVEAT = "receiveat"
    STOREAT = "storeat"
    DELETEWITHIN = "deletewithin"


class ComplianceRule(str, Enum):
    """Compliance rules a service trace is checked against."""

    COLLECTION_CONSENT = "C1"
    COLLECTION_PURPOSES = "C2"
    USAGE_CONSENT = "C3"
    USAGE_PURPOSES = "C4"
    STORAGE_CONSENT = "C5"
    STORAGE_PLACES = "C6"
    DELETION_PLACES = "C7"
    DELETION_DELAY = "C8"
    TRANSFER_CONSENT = "C9"
    TRANSFER_TO = "C10"
    TRANSFER_PURPOSES = "C11"

    @property
    def title(self) -> str:
        """Short human readable name, e.g. ``collection consent``."""
        return self.name.lower().replace("_", " ")

    @property
    def sub_policy(self) -> SubPolicy:
        """Sub-policy the rule enforces."""
        return SubPolicy(self.name.split("_", 1)[0].lower())


class GoalKind(str, Enum):
    """Goal groups of the generated goal set."""

    CCONS = "ccons"
    UCONS = "ucons"
    SCONS = "scons"
    FWCONS = "fwcons"
    CPURP = "cpurp"
    UPURP = "upurp"
    FWPURP = "fwpurp"
    PLACES = "places"
    HASUPTO = "hasupto"
    WITHIN = "within"
    FWTO = "fwto"
    HAS = "has"
    LINK = "link"


class Polarity(str, Enum):
    """Whether the policy expects a goal to be provable."""

    PROVABLE = "expected-provable"
    UNPROVABLE = "expected-unprovable"


class Outcome(str, Enum):
    """Result of a proof attempt."""

    PROVED = "proved"
    NOT_PROVED = "not-proved"


class Classification(str, Enum):
    """Conformance verdict classes."""

    FUNCTIONAL_CONFORM = "functional-conform"
    FUNCTIONAL_VIOLATION = "functional-violation"
    PRIVACY_CONFORM = "privacy-conform"
    PRIVACY_VIOLATION = "privacy-violation"
    DPR_CONFORM = "dpr-conform"
    DPR_VIOLATION = "dpr-violation"

    @property
    def is_violation(self) -> bool:
        """Whether the class denotes a violation."""
        return self.value.endswith("violation")


class ReportFormat(str, Enum):
    """Report rendering formats."""

    TEXT = "text"
    JSON = "json"


class Events(str, Enum):
    """Verification pipeline events."""

    GOAL_VERIFIED = "goal_verified"
    VIOLATION_FOUND = "violation_found"
    VERIFICATION_DONE = "verification_done"


def _int_from_env(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        number = int(value)
    except ValueError as ex:
        raise InputError(f"{name} must be an integer, got '{value}'") from ex
    if number < 0:
        raise InputError(f"{name} must not be negative, got {number}")
    return number


def default_max_crypto_depth() -> int:
    """
    Return the crypto depth N used when none is given explicitly.

    Read from ``DPV_MAX_CRYPTO_DEPTH``, falling back to 3.

    :raises InputError: if the variable is not a non-negative integer.
    """
    return _int_from_env(ENV_MAX_CRYPTO_DEPTH, DEFAULT_MAX_CRYPTO_DEPTH)


def default_max_nesting() -> int:
    """Return the compound nesting bound from ``DPV_MAX_NESTING`` (default 3)."""
    return _int_from_env(ENV_MAX_NESTING, DEFAULT_MAX_NESTING)
