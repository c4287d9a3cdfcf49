import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from radex.adapters import (
    AnnotatorEndpoint,
    ExternalFormat,
    annotate_remote,
    convert_raw_mesh,
    import_predictions,
)
from radex.corpus import Corpus, Report
from radex.errors import EndpointUnreachable, MalformedResponse, ParseError, UnknownFormat
from radex.evalkit import PredictionSet, save_predictions_jsonl
from radex.ruleextract import Lexicon


class MockAnnotator:
    """Scripted HTTP annotator; ``script`` maps call number to (status, body, delay)."""

    def __init__(self, default=(200, {"terms": ["opacity"]}, 0.0), script=None):
        self.default = default
        self.script = script or {}
        self.calls = []
        self.lock = threading.Lock()
        owner = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with owner.lock:
                    n = len(owner.calls)
                    owner.calls.append((body, dict(self.headers)))
                status, payload, delay = owner.script.get(n, owner.default)
                if delay:
                    time.sleep(delay)
                raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(raw)))
                    self.end_headers()
                    self.wfile.write(raw)
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/annotate"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock():
    servers = []

    def make(**kwargs):
        servers.append(MockAnnotator(**kwargs))
        return servers[-1]

    yield make
    for s in servers:
        s.close()


def small_corpus(n=3):
    return Corpus(tuple(Report(f"r{i}", f"Finding {i}.", "Normal.") for i in range(n)))


class TestImport:
    def test_mti_batch_grouping(self, tmp_path):
        p = tmp_path / "mti.txt"
        p.write_text("* header line\n777|Cardiomegaly|C14.280|0.9\n"
                     "777|Pleural Effusion|C08.528|0.8\n\n778|Opacity|x\n")
        preds = import_predictions(p, ExternalFormat("mti_batch"))
        assert preds.predictions == {"777": ["Cardiomegaly", "Pleural Effusion"],
                                     "778": ["Opacity"]}
        assert preds.system_name == "mti"

    def test_mti_bad_line(self, tmp_path):
        p = tmp_path / "mti.txt"
        p.write_text("777|Cardiomegaly\nbroken line\n")
        with pytest.raises(ParseError) as err:
            import_predictions(p, "mti_batch")
        assert err.value.line == 2

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.jsonl"
        p.write_text("")
        assert len(import_predictions(p, "jsonl")) == 0
        assert len(import_predictions(p, "mti_batch")) == 0

    def test_jsonl(self, tmp_path):
        p = tmp_path / "x.jsonl"
        p.write_text('{"id": "r1", "terms": ["calcified granuloma"]}\n')
        preds = import_predictions(p, ExternalFormat("jsonl"), system_name="NER")
        assert preds.predictions == {"r1": ["calcified granuloma"]}
        assert preds.system_name == "NER"

    def test_jsonl_round_trip(self, tmp_path):
        preds = PredictionSet("sys", {"a": ["x y", "z"], "b": []})
        save_predictions_jsonl(preds, tmp_path / "sys.jsonl")
        assert import_predictions(tmp_path / "sys.jsonl").predictions == preds.predictions

    def test_unknown_format(self, tmp_path):
        with pytest.raises(UnknownFormat):
            import_predictions(tmp_path / "x", "xml")


class TestConvertRawMesh:
    def test_no_inversion(self):
        got = convert_raw_mesh("Calcinosis, Cardiomegaly, Costophrenic Angle", Lexicon.default())
        assert got == ["Calcinosis", "Cardiomegaly", "Costophrenic Angle"]

    def test_empty(self):
        assert convert_raw_mesh("", Lexicon.default()) == []

    def test_inversion(self):
        lex = Lexicon.from_terms(["thoracic aorta"])
        assert convert_raw_mesh("Aorta, Thoracic, Cicatrix", lex) == ["Thoracic Aorta", "Cicatrix"]

    def test_raw_summary_spacing(self):
        got = convert_raw_mesh("Aorta,   Thoracic,Cicatrix, Costophrenic Angle, Thickening",
                               Lexicon.default())
        assert got == ["Thoracic Aorta", "Cicatrix", "Costophrenic Angle", "Thickening"]

    def test_semicolons_take_priority(self):
        assert convert_raw_mesh("Aorta, Thoracic; Cicatrix") == ["Aorta, Thoracic", "Cicatrix"]


class TestAnnotateRemote:
    def test_echo(self, mock):
        server = mock()
        corpus = small_corpus()
        preds = annotate_remote(AnnotatorEndpoint(server.url), corpus)
        assert preds.predictions == {r.id: ["opacity"] for r in corpus}
        body, _ = server.calls[0]
        assert body == {"id": "r0", "text": "Finding 0.\nNormal."}

    def test_retry_after_server_errors(self, mock):
        server = mock(script={0: (500, {}, 0), 1: (503, {}, 0)})
        ep = AnnotatorEndpoint(server.url, max_retries=2, backoff=0.01)
        preds = annotate_remote(ep, small_corpus(1))
        assert preds.predictions == {"r0": ["opacity"]}
        assert len(server.calls) == 3

    def test_backoff_doubles(self, mock, monkeypatch):
        sleeps = []
        monkeypatch.setattr("radex.adapters.time.sleep", sleeps.append)
        server = mock(default=(500, {}, 0))
        ep = AnnotatorEndpoint(server.url, max_retries=3)
        with pytest.raises(EndpointUnreachable):
            annotate_remote(ep, small_corpus(1))
        assert sleeps == [1.0, 2.0, 4.0]

    def test_client_error_not_retried(self, mock):
        server = mock(script={0: (404, {}, 0)})
        ep = AnnotatorEndpoint(server.url, max_retries=2, backoff=0.01)
        preds = annotate_remote(ep, small_corpus(2))
        assert preds.predictions == {"r0": [], "r1": ["opacity"]}
        assert len(server.calls) == 2

    def test_always_timing_out(self, mock):
        server = mock(default=(200, {"terms": ["x"]}, 0.5))
        ep = AnnotatorEndpoint(server.url, timeout=0.1, max_retries=1, backoff=0.01)
        with pytest.raises(EndpointUnreachable) as err:
            annotate_remote(ep, small_corpus(3))
        assert err.value.predictions.predictions == {"r0": [], "r1": [], "r2": []}

    def test_partial_failure_recorded_empty(self, mock):
        server = mock(script={0: (500, {}, 0)})
        ep = AnnotatorEndpoint(server.url, max_retries=0)
        preds = annotate_remote(ep, small_corpus(2))
        assert preds.predictions == {"r0": [], "r1": ["opacity"]}

    def test_malformed(self, mock):
        server = mock(default=(200, {"labels": []}, 0))
        with pytest.raises(MalformedResponse) as err:
            annotate_remote(AnnotatorEndpoint(server.url), small_corpus(1))
        assert err.value.report_id == "r0"

    def test_bearer_token_from_env(self, mock, monkeypatch):
        monkeypatch.setenv("RADEX_TOKEN", "s3cret")
        server = mock()
        annotate_remote(AnnotatorEndpoint(server.url), small_corpus(1))
        _, headers = server.calls[0]
        assert headers["Authorization"] == "Bearer s3cret"

    def test_parallel_one_entry_per_report(self, mock):
        server = mock(default=(200, {"terms": ["mass"]}, 0.05))
        corpus = small_corpus(8)
        before = corpus.reports
        preds = annotate_remote(AnnotatorEndpoint(server.url), corpus, max_in_flight=4)
        assert list(preds.predictions) == corpus.ids
        assert corpus.reports == before

    def test_unreachable_host(self):
        ep = AnnotatorEndpoint("http://127.0.0.1:9/none", timeout=0.2, max_retries=0)
        with pytest.raises(EndpointUnreachable):
            annotate_remote(ep, small_corpus(2))

    @pytest.mark.parametrize("kwargs", [{"timeout": 0}, {"max_retries": -1}])
    def test_endpoint_validation(self, kwargs):
        with pytest.raises(ValueError):
            AnnotatorEndpoint("http://x", **kwargs)
