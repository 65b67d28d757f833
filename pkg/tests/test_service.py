import threading

import pytest
from fastapi.testclient import TestClient

from correctloop.data import LabelSpace
from correctloop.loop import QueueItem, RelabelQueue
from correctloop.service import LogCorruptError, QueueState, create_app

SPACE = LabelSpace(("pos", "neg", "other"))


def make_queue(n=3):
    return RelabelQueue([
        QueueItem(example_id=f"q{i}", text=f"text {i}",
                  ref_prev_label="pos", ref_pred_label="neg", ref_pred_prob=0.8764)
        for i in range(n)
    ])


@pytest.fixture
def client(tmp_path):
    app = create_app(make_queue(), SPACE, tmp_path / "log.jsonl")
    return TestClient(app)


class TestApi:
    def test_next_returns_first_pending(self, client):
        r = client.get("/api/queue/next")
        assert r.status_code == 200
        body = r.json()
        assert body["id"] == "q0"
        assert body["references"] == {"prev_label": "pos", "pred_label": "neg",
                                      "pred_prob": 0.876}
        assert body["position"] == 1 and body["total"] == 3

    def test_label_then_progress(self, client):
        assert client.post("/api/items/q0/label", json={"label": "neg"}).status_code == 200
        prog = client.get("/api/progress").json()
        assert prog["done"] == 1 and prog["pending"] == 2 and prog["skipped"] == 0
        assert prog["per_class"]["neg"] == 1

    def test_invalid_label_422(self, client):
        r = client.post("/api/items/q0/label", json={"label": "bogus"})
        assert r.status_code == 422
        assert r.json()["error"] == "invalid_label"

    def test_unknown_id_404(self, client):
        assert client.post("/api/items/zzz/label", json={"label": "pos"}).status_code == 404

    def test_duplicate_submission_409_log_unchanged(self, tmp_path):
        log = tmp_path / "log.jsonl"
        client = TestClient(create_app(make_queue(), SPACE, log))
        client.post("/api/items/q0/label", json={"label": "neg"})
        lines_before = log.read_text().splitlines()
        r = client.post("/api/items/q0/label", json={"label": "pos"})
        assert r.status_code == 409
        assert log.read_text().splitlines() == lines_before

    def test_skip_then_revisit_after_pending(self, client):
        client.post("/api/items/q0/skip")
        assert client.get("/api/queue/next").json()["id"] == "q1"
        client.post("/api/items/q1/label", json={"label": "pos"})
        client.post("/api/items/q2/label", json={"label": "pos"})
        # all pending done; the skipped item comes back
        assert client.get("/api/queue/next").json()["id"] == "q0"

    def test_exhausted_returns_204(self, client):
        for i in range(3):
            client.post(f"/api/items/q{i}/label", json={"label": "pos"})
        assert client.get("/api/queue/next").status_code == 204
        prog = client.get("/api/progress").json()
        assert prog["done"] == 3 and prog["pending"] == 0

    def test_confirming_previous_label_accepted(self, tmp_path):
        log = tmp_path / "log.jsonl"
        client = TestClient(create_app(make_queue(), SPACE, log))
        r = client.post("/api/items/q0/label", json={"label": "pos"})  # == prev
        assert r.status_code == 200
        assert '"new_label": "pos"' in log.read_text()

    def test_labelspace_endpoint(self, client):
        assert client.get("/api/labelspace").json() == {"classes": ["pos", "neg", "other"]}


class TestDurability:
    def test_restart_replays_log(self, tmp_path):
        log = tmp_path / "log.jsonl"
        c1 = TestClient(create_app(make_queue(), SPACE, log))
        c1.post("/api/items/q0/label", json={"label": "neg"})
        c1.post("/api/items/q1/label", json={"label": "pos"})
        # simulate a crash/restart: fresh app over the same log
        c2 = TestClient(create_app(make_queue(), SPACE, log))
        assert c2.get("/api/queue/next").json()["id"] == "q2"
        prog = c2.get("/api/progress").json()
        assert prog["done"] == 2
        # replay oracle: done count equals log line count
        assert len(log.read_text().splitlines()) == 2

    def test_corrupt_log_with_duplicates_rejected(self, tmp_path):
        log = tmp_path / "log.jsonl"
        line = ('{"id": "q0", "new_label": "pos", "source": "human", '
                '"ref_prev_label": "pos", "ref_pred_label": "neg", "ts": 1}\n')
        log.write_text(line + line)
        with pytest.raises(LogCorruptError):
            QueueState(make_queue(), SPACE, log)

    def test_log_append_only(self, tmp_path):
        log = tmp_path / "log.jsonl"
        client = TestClient(create_app(make_queue(), SPACE, log))
        client.post("/api/items/q0/label", json={"label": "pos"})
        first = log.read_text()
        client.post("/api/items/q1/label", json={"label": "neg"})
        assert log.read_text().startswith(first)

    def test_concurrent_same_id_one_success(self, tmp_path):
        log = tmp_path / "log.jsonl"
        state = QueueState(make_queue(), SPACE, log)
        codes = []
        lock = threading.Lock()

        def worker():
            code, _ = state.submit_label("q0", "neg")
            with lock:
                codes.append(code)

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(codes) == [200] + [409] * 7
        assert len(log.read_text().splitlines()) == 1

    def test_concurrent_distinct_ids_all_accepted(self, tmp_path):
        state = QueueState(make_queue(10), SPACE, tmp_path / "log.jsonl")
        codes = []
        lock = threading.Lock()

        def worker(i):
            code, _ = state.submit_label(f"q{i}", "pos")
            with lock:
                codes.append(code)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(10)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert codes == [200] * 10
