"""Thin client used by the CLI.

By default the app runs in-process (no socket, nothing to deploy); pass a
server URL to talk to a remote instance instead. Error envelopes from the
service are rehydrated into the matching domain exceptions so callers see
the same exception types either way.
"""

from __future__ import annotations

import httpx

from .errors import DataError, InvariantError, UsageError

_KIND_TO_ERROR = {
    "usage": UsageError,
    "data": DataError,
    "internal": InvariantError,
}


class ServiceClient:
    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def get(self, path: str) -> dict:
        return self._finish(self._request("GET", path))

    def post(self, path: str, payload: dict | None = None) -> dict:
        return self._finish(self._request("POST", path, json=payload or {}))

    def _request(self, method: str, path: str, **kwargs):
        try:
            return self._client.request(method, path, **kwargs)
        except httpx.HTTPError as exc:
            raise UsageError(f"cannot reach server: {exc}") from exc

    @staticmethod
    def _finish(response) -> dict:
        if response.status_code < 400:
            return response.json()
        try:
            detail = response.json()["error"]
            kind, message = detail["kind"], detail["message"]
        except (ValueError, KeyError, TypeError):
            kind, message = "data", f"HTTP {response.status_code}: {response.text[:200]}"
        raise _KIND_TO_ERROR.get(kind, DataError)(message)
