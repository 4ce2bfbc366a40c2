"""Minimal W3C WebDriver wire-protocol client.

Only the handful of endpoints the scenario runner needs: session
lifecycle, navigation, element lookup by CSS selector, click, send
keys, synchronous script execution and page source. Works against any
compliant driver (chromedriver, geckodriver, or a test double).
"""

from __future__ import annotations

from typing import Any, Mapping, Optional

import requests

# W3C identifier under which element responses carry the element id.
ELEMENT_KEY = "element-6066-11e4-a52e-4f735466cecf"


class WebDriverError(Exception):
    """Protocol-level failure reported by the driver."""

    def __init__(self, message: str, error: str = "", status: int = 0) -> None:
        super().__init__(message)
        self.error = error
        self.status = status


class NoSuchElement(WebDriverError):
    """Element lookup came back empty."""


class WebDriverSession:
    def __init__(
        self,
        endpoint: str,
        session_id: str,
        http: requests.Session,
        timeout_s: float = 30.0,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.session_id = session_id
        self._http = http
        self.timeout_s = timeout_s

    @classmethod
    def start(
        cls,
        endpoint: str,
        capabilities: Optional[Mapping[str, Any]] = None,
        timeout_s: float = 30.0,
    ) -> "WebDriverSession":
        http = requests.Session()
        payload = {"capabilities": {"alwaysMatch": dict(capabilities or {})}}
        try:
            resp = http.post(
                endpoint.rstrip("/") + "/session", json=payload, timeout=timeout_s
            )
        except requests.RequestException as exc:
            raise WebDriverError(f"cannot reach driver at {endpoint}: {exc}") from exc
        value = _unwrap(resp)
        session_id = value.get("sessionId") or value.get("session_id")
        if not session_id:
            raise WebDriverError(f"driver returned no session id: {value!r}")
        return cls(endpoint, session_id, http, timeout_s)

    def _request(self, method: str, path: str, payload: Any = None) -> Any:
        url = f"{self.endpoint}/session/{self.session_id}{path}"
        try:
            resp = self._http.request(
                method, url, json=payload, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise WebDriverError(f"driver request {method} {path} failed: {exc}") from exc
        return _unwrap(resp)

    def navigate(self, url: str) -> None:
        self._request("POST", "/url", {"url": url})

    def current_url(self) -> str:
        return self._request("GET", "/url")

    def find_element(self, css: str) -> str:
        value = self._request(
            "POST", "/element", {"using": "css selector", "value": css}
        )
        element_id = value.get(ELEMENT_KEY) if isinstance(value, dict) else None
        if not element_id:
            raise NoSuchElement(f"no element matches {css!r}")
        return element_id

    def click(self, element_id: str) -> None:
        self._request("POST", f"/element/{element_id}/click", {})

    def send_keys(self, element_id: str, text: str) -> None:
        self._request(
            "POST",
            f"/element/{element_id}/value",
            {"text": text, "value": list(text)},
        )

    def execute(self, script: str, args: Optional[list] = None) -> Any:
        return self._request(
            "POST", "/execute/sync", {"script": script, "args": args or []}
        )

    def page_source(self) -> str:
        return self._request("GET", "/source")

    def delete(self) -> None:
        try:
            self._request("DELETE", "")
        except WebDriverError:
            pass  # session teardown is best-effort

    def __enter__(self) -> "WebDriverSession":
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.delete()


def _unwrap(resp: requests.Response) -> Any:
    try:
        body = resp.json()
    except ValueError as exc:
        raise WebDriverError(
            f"non-JSON driver response (HTTP {resp.status_code})",
            status=resp.status_code,
        ) from exc
    value = body.get("value") if isinstance(body, dict) else None
    if resp.status_code >= 400:
        error = ""
        message = f"HTTP {resp.status_code}"
        if isinstance(value, dict):
            error = value.get("error", "")
            message = value.get("message", message)
        if error == "no such element":
            raise NoSuchElement(message, error=error, status=resp.status_code)
        raise WebDriverError(message, error=error, status=resp.status_code)
    return value
