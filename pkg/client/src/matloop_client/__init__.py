"""Thin API client for the campaign server's table routes.

Typical use mirrors the closed-loop pipeline: fetch governed rows, hand them
to any external ML stack, feed recommendations back through the API::

    with MatloopClient() as client:
        df = client.get_data_table_rows(
            tableName="iqr_dataframe",
            columns=["Nb", "Cr", "V", "W", "Zr", "Creep_Merit"],
            numRows=1000,
        ).to_dataframe()

Base URL and token come from MATLOOP_URL / MATLOOP_TOKEN or the constructor.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import requests

__version__ = "0.1.0"

DEFAULT_URL = "http://127.0.0.1:8080"


class ApiRequestError(RuntimeError):
    """Server-reported failure with the HTTP status and machine code attached."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(f"{status} {code}: {message}")
        self.status = status
        self.code = code


@dataclass
class RowsResult:
    """Columnar query result; converts to a pandas DataFrame on demand."""

    columns: list[str]
    rows: list[list]

    def to_dataframe(self):
        import pandas as pd

        return pd.DataFrame(self.rows, columns=self.columns)

    def __len__(self) -> int:
        return len(self.rows)


class MatloopClient:
    """One HTTP session against a campaign server; use as a context manager."""

    def __init__(self, base_url: str | None = None, token: str | None = None,
                 timeout: float = 30.0):
        self.base_url = (base_url or os.environ.get("MATLOOP_URL", DEFAULT_URL)
                         ).rstrip("/")
        self.token = token or os.environ.get("MATLOOP_TOKEN", "")
        self.timeout = timeout
        self._session = requests.Session()

    def __enter__(self) -> "MatloopClient":
        return self

    def __exit__(self, *exc_info):
        self.close()

    def close(self):
        self._session.close()

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"}

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        try:
            resp = self._session.post(url, json=payload, headers=self._headers(),
                                      timeout=self.timeout)
        except requests.ConnectionError:
            # one reconnect attempt on a fresh session
            self._session.close()
            self._session = requests.Session()
            resp = self._session.post(url, json=payload, headers=self._headers(),
                                      timeout=self.timeout)
        if resp.status_code >= 400:
            try:
                err = resp.json().get("error", {})
            except ValueError:
                err = {}
            raise ApiRequestError(resp.status_code, err.get("code", "unknown"),
                                  err.get("message", resp.text[:200]))
        return resp.json()

    def get_data_table_rows(self, tableName: str, columns: list[str],
                            numRows: int | None = None) -> RowsResult:
        """Fetch rows from a governed table, preserving requested column order.

        Missing cells surface as None (NaN after to_dataframe). Server-side
        4xx/5xx raise ApiRequestError with the machine code attached.
        """
        payload: dict = {"columns": list(columns)}
        if numRows is not None:
            payload["numRows"] = int(numRows)
        doc = self._post(f"/v1/tables/{tableName}/query", payload)
        return RowsResult(columns=doc["columns"], rows=doc["rows"])
