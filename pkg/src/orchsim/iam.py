"""Minimal identity and access layer.

Opaque server-side bearer tokens carry subject, groups and expiry; provider
access is default-deny with explicit permit rules per (group, provider); a
token can be translated into deterministic non-federated credential records.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import DomainError

CRED_SSH_KEY = "ssh_key"
CRED_USERPASS = "userpass"
CRED_KINDS = (CRED_SSH_KEY, CRED_USERPASS)


class IamError(DomainError):
    pass


class UnknownTokenError(IamError):
    pass


class ExpiredTokenError(IamError):
    pass


class RevokedTokenError(IamError):
    pass


@dataclass
class TokenRecord:
    token_id: str
    subject: str
    groups: frozenset[str]
    issued_at: int
    expires_at: int
    revoked: bool = False


@dataclass(frozen=True)
class PolicyRule:
    group: str
    provider_id: str
    permit: bool = True


@dataclass(frozen=True)
class TranslatedCredential:
    kind: str
    subject: str
    payload: str
    valid_until: int


class IamService:
    """Single-writer token store; reads are safe between mutation events."""

    def __init__(self, seed: int = 0):
        self._seed = seed
        self._counter = 0
        self._tokens: dict[str, TokenRecord] = {}
        self._permits: set[tuple[str, str]] = set()

    def issue_token(self, subject: str, groups, ttl_s: int, t: int) -> TokenRecord:
        if ttl_s <= 0:
            raise IamError("ttl_s must be > 0")
        self._counter += 1
        digest = hashlib.sha256(
            ("%d:%d:%s" % (self._seed, self._counter, subject)).encode()).hexdigest()
        token = TokenRecord(
            token_id="tok-%06d-%s" % (self._counter, digest[:10]),
            subject=subject,
            groups=frozenset(groups),
            issued_at=t,
            expires_at=t + ttl_s,
        )
        self._tokens[token.token_id] = token
        return token

    def validate(self, token_id: str, t: int) -> TokenRecord:
        """Return the record iff known, not revoked and not yet expired.

        Expiry is exclusive: a token is invalid from t == expires_at on.
        """
        token = self._tokens.get(token_id)
        if token is None:
            raise UnknownTokenError("unknown token %r" % token_id)
        if token.revoked:
            raise RevokedTokenError("token %s is revoked" % token_id)
        if t >= token.expires_at:
            raise ExpiredTokenError("token %s expired at t=%d" % (token_id, token.expires_at))
        return token

    def revoke(self, token_id: str):
        token = self._tokens.get(token_id)
        if token is None:
            raise UnknownTokenError("unknown token %r" % token_id)
        token.revoked = True

    def groups_of(self, subject: str) -> set[str]:
        """Union of groups over all of a subject's issued tokens."""
        groups: set[str] = set()
        for token in self._tokens.values():
            if token.subject == subject:
                groups |= set(token.groups)
        return groups

    def tokens_of(self, subject: str) -> list[TokenRecord]:
        return [tok for tok in self._tokens.values() if tok.subject == subject]

    def add_permit(self, group: str, provider_id: str):
        self._permits.add((group, provider_id))

    def load_policy(self, text: str):
        """Read permit rules, one per line: ``permit <group> <provider_id>``."""
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] != "permit":
                raise IamError("policy line %d: expected 'permit <group> <provider>'" % lineno)
            self.add_permit(parts[1], parts[2])

    def authorize(self, token: TokenRecord, provider_id: str) -> bool:
        """Default-deny: true only when some group of the token is permitted."""
        return any((group, provider_id) in self._permits for group in token.groups)

    def translate(self, token: TokenRecord, kind: str, t: int) -> TranslatedCredential:
        """Derive a credential record; never outlives the source token."""
        if kind not in CRED_KINDS:
            raise IamError("unknown credential kind %r" % kind)
        if token.revoked:
            raise RevokedTokenError("token %s is revoked" % token.token_id)
        if t >= token.expires_at:
            raise ExpiredTokenError("token %s expired at t=%d" % (token.token_id, token.expires_at))
        payload = hashlib.sha256(("%s:%s" % (token.token_id, kind)).encode()).hexdigest()
        return TranslatedCredential(kind=kind, subject=token.subject,
                                    payload=payload, valid_until=token.expires_at)
