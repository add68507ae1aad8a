"""Bearer-token authentication and role-based authorization.

Token secrets are shown once at issue time; only their sha-256 digest is
stored. Roles are a fixed v1 registry: one role per permission, named after
it, plus `admin` which implies everything.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass

from .errors import AuthenticationError, NotFound, RequestError
from .storage import DocumentStore

PERMISSIONS = frozenset({
    "config_read", "config_write", "record_write", "record_read",
    "file_write", "file_read", "audit_read", "admin",
})

# v1 role registry: role name == permission it grants; admin implies all
ROLES: dict[str, frozenset[str]] = {p: frozenset({p}) for p in PERMISSIONS}
ROLES["admin"] = PERMISSIONS


@dataclass(frozen=True)
class Principal:
    principal_id: str
    display_name: str
    roles: frozenset[str]

    @property
    def permissions(self) -> frozenset[str]:
        perms: set[str] = set()
        for role in self.roles:
            perms |= ROLES.get(role, frozenset())
        if "admin" in perms:
            perms |= PERMISSIONS
        return frozenset(perms)

    def can(self, permission: str) -> bool:
        return permission in self.permissions


def hash_secret(secret: str) -> str:
    return hashlib.sha256(secret.encode("utf-8")).hexdigest()


class PrincipalDirectory:
    """Principal registry over the document store (collection 'principals')."""

    COLLECTION = "principals"

    def __init__(self, store: DocumentStore):
        self.store = store

    def create(self, principal_id: str, display_name: str) -> None:
        if self.store.get(self.COLLECTION, principal_id) is not None:
            raise RequestError(f"principal '{principal_id}' already exists")
        self.store.put(self.COLLECTION, principal_id, {
            "principal_id": principal_id,
            "display_name": display_name,
            "roles": [],
            "token_hash": None,
            "active": True,
        })

    def exists(self, principal_id: str) -> bool:
        return self.store.get(self.COLLECTION, principal_id) is not None

    def issue_token(self, principal_id: str, roles: list[str]) -> str:
        """Returns the one-time-visible bearer secret (>= 256 bits entropy)."""
        for role in roles:
            if role not in ROLES:
                raise RequestError(f"unknown role '{role}'",
                                   details=[{"role": role, "known": sorted(ROLES)}])
        if not roles:
            raise RequestError("active principals need at least one role")
        doc = self.store.get(self.COLLECTION, principal_id)
        if doc is None:
            raise NotFound(f"no principal '{principal_id}'")
        secret = secrets.token_urlsafe(32)
        doc.update(roles=sorted(set(roles)), token_hash=hash_secret(secret), active=True)
        self.store.put(self.COLLECTION, principal_id, doc)
        return secret

    def revoke(self, principal_id: str) -> None:
        doc = self.store.get(self.COLLECTION, principal_id)
        if doc is None:
            raise NotFound(f"no principal '{principal_id}'")
        doc.update(token_hash=None, active=False)
        self.store.put(self.COLLECTION, principal_id, doc)

    def authenticate(self, secret: str | None) -> Principal:
        if not secret:
            raise AuthenticationError("missing bearer token")
        presented = hash_secret(secret)
        matched = None
        # compare against every stored digest so timing does not leak which
        # principal (if any) the token belongs to
        for _, _, doc in self.store.iter_latest(self.COLLECTION):
            stored = doc.get("token_hash")
            if stored and hmac.compare_digest(presented, stored) and doc.get("active"):
                matched = doc
        if matched is None:
            raise AuthenticationError("unknown or revoked token")
        return Principal(principal_id=matched["principal_id"],
                         display_name=matched.get("display_name", ""),
                         roles=frozenset(matched.get("roles", [])))
