import json
from concurrent.futures import ThreadPoolExecutor
from unittest import mock

import numpy as np
import requests
from django.test import Client, SimpleTestCase

from bbtune.exceptions import OracleUnavailableError, ProtocolError
from bbtune.oracle import service
from bbtune.oracle.base import TUNE
from bbtune.oracle.fixture import make_fixture_task
from bbtune.oracle.protocol import OracleRequest, OracleResponse, encode_request, encode_response
from bbtune.oracle.remote import RemoteOracle
from bbtune.prompting.templates import encode_batch
from bbtune.prompting.verbalizer import VerbalizerSet

BASE_URL = "http://testserver"


class ClientSession:
    """Routes a RemoteOracle through the Django test client."""

    def __init__(self, client=None):
        self.client = client or Client()

    def post(self, url, timeout=None, data=None, headers=None):
        return self.client.post(url[len(BASE_URL):], data=data, content_type="application/json")

    def get(self, url, timeout=None):
        return self.client.get(url[len(BASE_URL):])


def answer(status_code, content=b""):
    return mock.Mock(status_code=status_code, content=content)


class ServiceTestCase(SimpleTestCase):
    def setUp(self):
        self.task = make_fixture_task(seed=3, layers=2, width=16, vocab_size=64, shots=4)
        self.served = service.install(self.task.oracle())
        vocabulary = self.task.vocabulary
        self.ids = VerbalizerSet.manual(self.task.manual_verbalizers).ids(vocabulary)
        self.request = OracleRequest(np.random.default_rng(0).normal(size=(2, 16)),
                                     encode_batch(self.task.template, self.task.corpus.train, vocabulary),
                                     self.ids)


class ViewsTest(ServiceTestCase):
    def test_score(self):
        response = self.client.post("/v1/score", data=encode_request(self.request),
                                    content_type="application/json")
        self.assertEqual(response.status_code, 200)
        document = json.loads(response.content)
        self.assertEqual(document["request_id"], self.request.request_id)
        self.assertEqual(len(document["probs"]), len(self.request.batch))
        self.assertEqual(document["calls"], 1)

    def test_malformed_body_is_rejected_without_charge(self):
        response = self.client.post("/v1/score", data=b"{not json", content_type="application/json")
        self.assertEqual(response.status_code, 400)
        self.assertIn("error", response.json())
        self.assertEqual(self.client.get("/health").json(), {"status": "ok", "calls": 0})

    def test_wrong_prompt_shape_is_rejected(self):
        request = self.request.with_prompts(np.zeros((3, 16)))
        response = self.client.post("/v1/score", data=encode_request(request), content_type="application/json")
        self.assertEqual(response.status_code, 400)
        self.assertEqual(self.served.counter.total(), 0)

    def test_score_needs_post(self):
        self.assertEqual(self.client.get("/v1/score").status_code, 405)

    def test_model_description(self):
        document = self.client.get("/v1/model").json()
        self.assertEqual((document["layers"], document["width"]), (2, 16))
        self.assertEqual(len(document["vocabulary"]["tokens"]), len(self.task.vocabulary))
        self.assertEqual(len(document["embeddings"]), len(self.task.vocabulary))


class RemoteOracleLoopbackTest(ServiceTestCase):
    def remote(self):
        return RemoteOracle(BASE_URL, retries=0, timeout=1, backoff=0, session=ClientSession())

    def test_loss_agrees_with_in_process_oracle(self):
        remote = self.remote().evaluate(self.request)
        local = self.task.oracle().evaluate(self.request)
        self.assertAlmostEqual(remote.loss, local.loss, delta=1e-9)
        np.testing.assert_array_equal(remote.probs, local.probs)

    def test_model_card(self):
        card = self.remote().describe()
        self.assertEqual(card.vocabulary.tokens, self.task.vocabulary.tokens)
        self.assertEqual(card.vocabulary.reserved, self.task.vocabulary.reserved)
        np.testing.assert_array_equal(card.embeddings, self.task.spec.embeddings)

    def test_client_and_server_count_the_same_calls(self):
        oracle = self.remote()
        for _ in range(3):
            oracle.evaluate(self.request)
        self.assertEqual(oracle.counter.count(TUNE), 3)
        self.assertEqual(self.client.get("/health").json()["calls"], 3)

    def test_two_concurrent_clients(self):
        oracles = [self.remote(), self.remote()]

        def run(oracle):
            return [oracle.evaluate(self.request).loss for _ in range(5)]

        with ThreadPoolExecutor(max_workers=2) as executor:
            losses = list(executor.map(run, oracles))
        self.assertEqual(losses[0], losses[1])
        self.assertEqual(self.client.get("/health").json()["calls"], 10)


class RemoteOracleRetryTest(ServiceTestCase):
    def remote(self, session, retries=2):
        return RemoteOracle("http://oracle.invalid", retries=retries, timeout=1, backoff=0, session=session)

    def good_answer(self):
        probs = np.full((len(self.request.batch), 4), 0.25)
        return answer(200, encode_response(OracleResponse(probs, 0.5, 1, self.request.request_id)))

    def test_retries_connection_errors_and_server_errors(self):
        session = mock.Mock()
        session.post.side_effect = [requests.ConnectionError("refused"), answer(503), self.good_answer()]
        response = self.remote(session).evaluate(self.request)
        self.assertEqual(response.loss, 0.5)
        self.assertEqual(session.post.call_count, 3)

    def test_client_errors_are_not_retried(self):
        session = mock.Mock()
        session.post.return_value = answer(400, b'{"error": "bad batch"}')
        with self.assertRaisesRegex(ProtocolError, "bad batch"):
            self.remote(session).evaluate(self.request)
        self.assertEqual(session.post.call_count, 1)

    def test_unavailable_after_retries(self):
        session = mock.Mock()
        session.post.side_effect = requests.ConnectionError("refused")
        oracle = self.remote(session)
        with self.assertRaises(OracleUnavailableError):
            oracle.evaluate(self.request)
        self.assertEqual(session.post.call_count, 3)
        self.assertEqual(oracle.counter.count(TUNE), 0)

    def test_wrong_row_count(self):
        session = mock.Mock()
        session.post.return_value = answer(200, encode_response(OracleResponse(np.full((1, 2), 0.5))))
        with self.assertRaises(ProtocolError):
            self.remote(session).evaluate(self.request)

    def test_needs_endpoint(self):
        with self.assertRaises(OracleUnavailableError):
            RemoteOracle("")
