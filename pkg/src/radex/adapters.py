"""Ingestion of third-party annotator output.

Supported inputs:

* ``jsonl`` - the native predictions format, ``{"id": ..., "terms": [...]}``.
* ``mti_batch`` - pipe-delimited ``ID|Term|...`` lines as written by batch
  MeSH indexers; only the first two fields are used and lines starting with
  ``*`` are comments.
* a live HTTP annotator answering ``POST {"id", "text"}`` with ``{"terms"}``.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from radex.corpus import Corpus, Report
from radex.errors import EndpointUnreachable, MalformedResponse, ParseError, UnknownFormat
from radex.evalkit import PredictionSet, load_predictions_jsonl
from radex.ruleextract import Lexicon, normalize_phrase

log = logging.getLogger(__name__)

FORMATS = ("jsonl", "mti_batch")
TOKEN_ENV = "RADEX_TOKEN"


@dataclass(frozen=True)
class ExternalFormat:
    kind: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FORMATS:
            raise UnknownFormat(f"unknown prediction format {self.kind!r}")


def _parse_mti_batch(path: Path) -> dict[str, list[str]]:
    predictions: dict[str, list[str]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("*"):
                continue
            fields = line.split("|")
            if len(fields) < 2 or not fields[0].strip() or not fields[1].strip():
                raise ParseError(lineno, "expected 'ID|Term|...'")
            predictions.setdefault(fields[0].strip(), []).append(fields[1].strip())
    return predictions


def import_predictions(path: str | Path, format: ExternalFormat | str = "jsonl",
                       system_name: str | None = None) -> PredictionSet:
    if isinstance(format, str):
        format = ExternalFormat(format)
    path = Path(path)
    name = system_name or format.options.get("system_name") or path.stem
    if format.kind == "jsonl":
        return load_predictions_jsonl(path, name)
    return PredictionSet(name, _parse_mti_batch(path))


def convert_raw_mesh(raw: str, known_multiword: Lexicon | None = None) -> list[str]:
    """Split a comma- or semicolon-joined MeSH summary into terms.

    Inverted headings are re-joined: adjacent fragments ``A, B`` become
    ``B A`` when that phrase is in ``known_multiword`` (so "Aorta, Thoracic"
    becomes "Thoracic Aorta" given the entry "thoracic aorta").
    """
    sep = ";" if ";" in raw else ","
    parts = [p.strip() for p in raw.split(sep)]
    parts = [" ".join(p.split()) for p in parts if p]
    out = []
    i = 0
    while i < len(parts):
        if known_multiword is not None and i + 1 < len(parts):
            flipped = f"{parts[i + 1]} {parts[i]}"
            if normalize_phrase(flipped) in known_multiword:
                out.append(flipped)
                i += 2
                continue
        out.append(parts[i])
        i += 1
    return out


@dataclass(frozen=True)
class AnnotatorEndpoint:
    url: str
    timeout: float = 30.0
    max_retries: int = 2
    token: str | None = None
    backoff: float = 1.0

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class _Failed(Exception):
    pass


def _annotate_one(endpoint: AnnotatorEndpoint, report: Report,
                  headers: dict) -> list[str]:
    body = {"id": report.id, "text": report.findings + "\n" + report.impression}
    for attempt in range(endpoint.max_retries + 1):
        if attempt:
            time.sleep(endpoint.backoff * 2 ** (attempt - 1))
        try:
            resp = requests.post(endpoint.url, json=body, headers=headers,
                                 timeout=endpoint.timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            log.debug("report %s attempt %d: %s", report.id, attempt + 1, exc)
            continue
        if resp.status_code == 200:
            try:
                payload = resp.json()
            except ValueError:
                raise MalformedResponse(report.id, "response is not JSON") from None
            terms = payload.get("terms") if isinstance(payload, dict) else None
            if not isinstance(terms, list) or not all(isinstance(t, str) for t in terms):
                raise MalformedResponse(report.id)
            return terms
        if 400 <= resp.status_code < 500:
            raise _Failed(f"HTTP {resp.status_code}")
        log.debug("report %s attempt %d: HTTP %d", report.id, attempt + 1, resp.status_code)
    raise _Failed(f"gave up after {endpoint.max_retries + 1} attempts")


def annotate_remote(endpoint: AnnotatorEndpoint, corpus: Corpus,
                    system_name: str = "remote", max_in_flight: int = 1) -> PredictionSet:
    """Query the endpoint once per report.

    A report whose requests all fail is recorded with no terms (scored as the
    fallback later); only when every report fails is EndpointUnreachable raised.
    """
    headers = {}
    token = endpoint.token or os.environ.get(TOKEN_ENV)
    if token:
        headers["Authorization"] = f"Bearer {token}"

    def run(report: Report) -> tuple[list[str], bool]:
        try:
            return _annotate_one(endpoint, report, headers), True
        except _Failed as exc:
            log.warning("report %s: annotation failed (%s)", report.id, exc)
            return [], False

    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(run, corpus))
    else:
        results = [run(r) for r in corpus]
    preds = PredictionSet(system_name, {r.id: res[0] for r, res in zip(corpus, results)})
    if results and not any(ok for _, ok in results):
        exc = EndpointUnreachable(f"{endpoint.url}: all {len(results)} reports failed")
        exc.predictions = preds
        raise exc
    return preds
