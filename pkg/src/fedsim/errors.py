"""Exception hierarchy.

Every error carries a short, stable ``code`` string so that callers (the flow
engine, the CLI) can report a reason without string-matching messages.
"""

from __future__ import annotations


class FedsimError(Exception):
    code = "error"

    def __init__(self, message: str | None = None):
        super().__init__(message or self.code)


# -- topology loading ---------------------------------------------------------

class TopologyError(FedsimError):
    code = "invalid topology"


class DocumentFormatError(TopologyError):
    code = "bad document"


class DanglingReferenceError(TopologyError):
    code = "dangling entity reference"


class HubMissingError(TopologyError):
    code = "hub missing"


class DuplicateEntityError(TopologyError):
    code = "duplicate entity id"


class InternalBehindNonProxyError(TopologyError):
    code = "internal sp behind non-proxy"


class UnknownEntityError(FedsimError):
    code = "unknown entity"


class UnknownFederationError(FedsimError):
    code = "unknown federation"


# -- integrity ----------------------------------------------------------------

class UnknownIssuerKeyError(FedsimError):
    code = "unknown issuer"


# -- providers ----------------------------------------------------------------

class UnknownUserError(FedsimError):
    code = "user unknown"


class UnknownRelyingPartyError(FedsimError):
    code = "unknown relying party"


class CodeExpiredError(FedsimError):
    code = "expired"


class CodeRedeemedError(FedsimError):
    code = "already redeemed"


class ClientMismatchError(FedsimError):
    code = "client mismatch"


class UnknownCodeError(FedsimError):
    code = "unknown code"


class LifetimeRangeError(FedsimError):
    code = "lifetime out of range"


class DuplicateRegistrationError(FedsimError):
    code = "duplicate"


class WrongProviderKindError(FedsimError):
    code = "wrong provider kind"


# -- attribute authorities ----------------------------------------------------

class NotMemberError(FedsimError):
    code = "not a member"


class RoleNotHeldError(FedsimError):
    code = "role not held"


class NonProxyLeafError(FedsimError):
    code = "non-proxy leaf"


class TokenExpiredError(FedsimError):
    code = "expired"


class UnknownReferenceError(FedsimError):
    code = "unknown reference"


class UnauthorizedAdminError(FedsimError):
    code = "unauthorized admin"


class MembershipError(FedsimError):
    code = "no such membership"


# -- proxy --------------------------------------------------------------------

class NotInternalError(FedsimError):
    code = "not my internal SP"


class CollisionError(FedsimError):
    code = "collision"


class SourceUnavailableError(FedsimError):
    code = "required source unavailable"


class NoTranslationPathError(FedsimError):
    code = "no translation path"


# -- translation --------------------------------------------------------------

class NoRouteError(FedsimError):
    code = "no route"


class InputExpiredError(FedsimError):
    code = "expired input"


class UnverifiableInputError(FedsimError):
    code = "unverifiable input"


class DepthExhaustedError(FedsimError):
    code = "depth exhausted"


class WindowError(FedsimError):
    code = "window outside parent"


class NameReuseError(FedsimError):
    code = "name reuse refused"


class NoActiveAccountError(FedsimError):
    code = "no active account"


class LocalAccountsDisabledError(FedsimError):
    code = "local accounts not enabled"


# -- flows / scenarios --------------------------------------------------------

class FlowSpecError(FedsimError):
    code = "invalid flow"


class ScenarioError(FedsimError):
    code = "invalid scenario"
