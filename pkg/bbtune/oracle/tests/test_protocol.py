import json

import numpy as np
from django.test import SimpleTestCase

from bbtune.exceptions import InvalidParameterError, ProtocolError
from bbtune.oracle.protocol import (OracleRequest, OracleResponse, PromptedExample, build_request, decode_request,
                                    decode_response, encode_request, encode_response)


def request(verbalizers=None):
    prompts = np.array([[0.1, -0.2, 1.0 / 3.0], [0.0, 2.5, -1e-7]])
    return build_request(prompts, [[1, 2, 3], [4, 0]], [2, 0], [0, 1], verbalizers)


class RequestTest(SimpleTestCase):
    def test_decoded_request_is_exact(self):
        original = request(verbalizers=[[1], [2, 3]])
        decoded = decode_request(encode_request(original))
        np.testing.assert_array_equal(decoded.prompts, original.prompts)
        self.assertEqual(decoded.batch, original.batch)
        self.assertEqual(decoded.verbalizers, ((1,), (2, 3)))
        self.assertEqual(decoded.request_id, original.request_id)

    def test_encoding_is_single_line_json(self):
        body = encode_request(request())
        self.assertNotIn(b"\n", body)
        document = json.loads(body)
        self.assertEqual(document["version"], 1)
        self.assertNotIn("verbalizers", document)

    def test_mask_outside_sequence(self):
        with self.assertRaises(InvalidParameterError):
            PromptedExample((1, 2), 2, 0)

    def test_request_needs_examples_and_finite_prompts(self):
        with self.assertRaises(InvalidParameterError):
            OracleRequest(np.zeros((1, 2)), [])
        with self.assertRaises(InvalidParameterError):
            OracleRequest(np.array([[np.nan, 0.0]]), [PromptedExample((1,), 0, 0)])

    def test_malformed_bodies(self):
        good = json.loads(encode_request(request()))
        broken = [
            b"not json",
            b"[1, 2]",
            json.dumps({**good, "version": 2}).encode(),
            json.dumps({**good, "prompts": [[1.0, 2.0], [3.0]]}).encode(),
            json.dumps({**good, "prompts": "zeros"}).encode(),
            json.dumps({**good, "batch": []}).encode(),
            json.dumps({**good, "batch": [{"tokens": [1, 2], "mask": 5, "label": 0}]}).encode(),
            json.dumps({**good, "batch": [{"tokens": [1.5], "mask": 0, "label": 0}]}).encode(),
            json.dumps({**good, "verbalizers": [[]]}).encode(),
        ]
        for body in broken:
            with self.assertRaises(ProtocolError, msg=body):
                decode_request(body)

    def test_with_prompts_keeps_batch(self):
        original = request()
        replaced = original.with_prompts(np.ones((2, 3)))
        self.assertEqual(replaced.batch, original.batch)
        np.testing.assert_array_equal(replaced.prompts, np.ones((2, 3)))


class ResponseTest(SimpleTestCase):
    def test_decoded_response_is_exact(self):
        probs = np.array([[0.25, 0.75], [1.0 / 3.0, 2.0 / 3.0]])
        decoded = decode_response(encode_response(OracleResponse(probs, 0.125, 7, "abc")), expected_rows=2)
        np.testing.assert_array_equal(decoded.probs, probs)
        self.assertEqual((decoded.loss, decoded.calls, decoded.request_id), (0.125, 7, "abc"))

    def test_null_loss(self):
        decoded = decode_response(encode_response(OracleResponse(np.array([[0.5, 0.5]]))))
        self.assertIsNone(decoded.loss)

    def test_invalid_probabilities(self):
        for probs in ([[0.5, 0.6]], [[-0.1, 1.1]]):
            body = json.dumps({"version": 1, "probs": probs, "loss": None, "calls": 1}).encode()
            with self.assertRaises(ProtocolError):
                decode_response(body)

    def test_row_count_checked(self):
        body = encode_response(OracleResponse(np.array([[0.5, 0.5]])))
        with self.assertRaises(ProtocolError):
            decode_response(body, expected_rows=2)

    def test_loss_must_be_finite(self):
        body = b'{"version":1,"probs":[[1.0]],"loss":"high","calls":1}'
        with self.assertRaises(ProtocolError):
            decode_response(body)

    def test_non_finite_values_are_not_encoded(self):
        with self.assertRaises(ValueError):
            encode_response(OracleResponse(np.array([[1.0]]), float("inf")))
