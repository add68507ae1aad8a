"""API error taxonomy shared by the HTTP layer and the CLI."""

from __future__ import annotations


class ApiError(Exception):
    """Error with a wire representation: JSON {code, message, details[]}."""

    status = 400
    code = "bad_request"

    def __init__(self, message: str, details: list | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or []

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


class AuthenticationError(ApiError):
    status = 401
    code = "authentication_failed"


class AuthorizationDenied(ApiError):
    status = 403
    code = "authorization_denied"


class NotFound(ApiError):
    status = 404
    code = "not_found"


class Conflict(ApiError):
    status = 409
    code = "conflict"


class RequestError(ApiError):
    status = 400
    code = "bad_request"


class ValidationRejected(ApiError):
    status = 422
    code = "validation_failed"


class StaleConfig(ApiError):
    status = 428
    code = "stale_config"
