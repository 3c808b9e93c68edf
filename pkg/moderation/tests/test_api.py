import json
import tempfile
from pathlib import Path

from django.test import override_settings
from django.urls import reverse
from rest_framework import status
from rest_framework.test import APITestCase

from moderation.models import ExperimentRun, GameRecord
from moderation.services.game_core import load_game

from .fixtures import counterexample_u, counterexample_v, dominant_game


def _payload(name, game):
    return {"name": name, **GameRecord.fields_from_game(game)}


class ApiTestCase(APITestCase):
    def setUp(self):
        self._directory = tempfile.TemporaryDirectory()
        self.root = Path(self._directory.name)
        self._override = override_settings(MODERATOR_OUTPUT_ROOT=self.root)
        self._override.enable()

    def tearDown(self):
        self._override.disable()
        self._directory.cleanup()

    def create_game(self, name, game):
        return GameRecord.objects.create(name=name, **GameRecord.fields_from_game(game))


class GameApiTests(ApiTestCase):
    def test_create_and_list(self):
        response = self.client.post(reverse("game-list"), _payload("dilema", dominant_game()), format="json")
        self.assertEqual(response.status_code, status.HTTP_201_CREATED)
        self.assertEqual(response.data["agent_names"], ["row", "column"])

        response = self.client.get(reverse("game-list"))
        self.assertEqual(response.data["count"], 1)
        self.assertEqual(response.data["results"][0]["shape"], [2, 2])
        self.assertNotIn("utilities", response.data["results"][0])

    def test_create_rejects_wrong_shape(self):
        payload = _payload("quebrado", dominant_game())
        payload["utilities"] = [[1, 2, 3], [1, 2, 3]]
        response = self.client.post(reverse("game-list"), payload, format="json")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn("utilities", response.data)

    def test_partial_update_keeps_shape_check(self):
        record = self.create_game("dilema", dominant_game())
        url = reverse("game-detail", args=[record.pk])
        response = self.client.patch(url, {"utilities": [[0, 0, 0, 0], [1, 1, 1, 1]]}, format="json")
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        response = self.client.patch(url, {"utilities": [[0, 0], [1, 1]]}, format="json")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    def test_generate(self):
        response = self.client.post(
            reverse("game-generate"), {"name": "aleatorio", "actions": [3, 2], "seed": 11}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_201_CREATED)
        self.assertEqual([len(a) for a in response.data["action_labels"]], [3, 2])

        again = self.client.post(
            reverse("game-generate"), {"name": "aleatorio", "actions": [3, 2]}, format="json"
        )
        self.assertEqual(again.status_code, status.HTTP_400_BAD_REQUEST)

    def test_generate_impossible_gap(self):
        response = self.client.post(
            reverse("game-generate"),
            {"name": "impossivel", "actions": [2, 2], "utility_low": 0, "utility_high": 1, "min_gap": 5},
            format="json",
        )
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn("error", response.data)

    def test_check_counterexample(self):
        u = self.create_game("u", counterexample_u())
        v = self.create_game("v", counterexample_v())
        response = self.client.post(reverse("game-check"), {"game": u.pk, "game_b": v.pk}, format="json")
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertFalse(response.data["equivalent"])
        self.assertEqual(response.data["br"]["verdict"], "indistinguishable")

    def test_check_incompatible_games(self):
        u = self.create_game("u", counterexample_u())
        d = self.create_game("d", dominant_game())
        response = self.client.post(reverse("game-check"), {"game": u.pk, "game_b": d.pk}, format="json")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    def test_download(self):
        record = self.create_game("dilema", dominant_game())
        response = self.client.get(reverse("game-download", args=[record.pk]))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertIn('filename="dilema.json"', response["Content-Disposition"])
        game = load_game(json.loads(b"".join(response.streaming_content)))
        self.assertEqual(game.utilities.tolist(), dominant_game().utilities.tolist())


class RunApiTests(ApiTestCase):
    def test_launch_simulate_and_download_ledger(self):
        record = self.create_game("dilema", dominant_game())
        response = self.client.post(
            reverse("run-launch"),
            {"mode": "simulate", "game_id": record.pk, "horizon": 6, "feedback": "br"},
            format="json",
        )
        self.assertEqual(response.status_code, status.HTTP_201_CREATED)
        self.assertEqual(response.data["status"], ExperimentRun.Status.FINISHED)
        self.assertNotIn("game_id", response.data["config"])
        self.assertTrue(response.data["output_dir"].startswith(str(self.root / "api-simulate-")))

        ledger = self.client.get(reverse("run-ledger", args=[response.data["id"]]))
        self.assertEqual(ledger.status_code, status.HTTP_200_OK)
        content = b"".join(ledger.streaming_content).decode("utf-8")
        self.assertEqual(len(content.strip().splitlines()), 7)

        listing = self.client.get(reverse("run-list"))
        self.assertEqual(listing.data["results"][0]["mode"], "simulate")

    def test_launch_learn_qr(self):
        record = self.create_game("u", counterexample_u())
        response = self.client.post(
            reverse("run-launch"), {"mode": "learn-qr", "game_id": record.pk, "eps": 1e-4}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_201_CREATED)
        self.assertTrue(response.data["summary"]["all_replayed"])

        ledger = self.client.get(reverse("run-ledger", args=[response.data["id"]]))
        self.assertEqual(ledger.status_code, status.HTTP_404_NOT_FOUND)

    def test_launch_rejects_check_modes(self):
        response = self.client.post(reverse("run-launch"), {"mode": "check-equiv"}, format="json")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertFalse(ExperimentRun.objects.exists())

    def test_launch_precondition(self):
        record = self.create_game("dilema", dominant_game())
        response = self.client.post(
            reverse("run-launch"), {"mode": "learn-qr", "game_id": record.pk}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.Status.FAILED)
